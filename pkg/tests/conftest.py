import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from axelrod_lab.engine import EventLog, Trajectory, replay
from axelrod_lab.model import Configuration, ModelParams

settings.register_profile(
    "ci", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def make_trajectory(params: ModelParams, initial: Configuration, rows,
                    engine: str = "harris", end_time: float | None = None,
                    absorbed: bool = False) -> Trajectory:
    """Synthetic trajectory from hand-written event rows
    (time, source, target, feature, mark, active, effective)."""
    rows = list(rows)
    events = EventLog(
        time=np.array([r[0] for r in rows], np.float64),
        source=np.array([r[1] for r in rows], np.int32),
        target=np.array([r[2] for r in rows], np.int32),
        feature=np.array([r[3] for r in rows], np.int16),
        mark=np.array([r[4] for r in rows], np.float64),
        active=np.array([r[5] for r in rows], np.bool_),
        effective=np.array([r[6] for r in rows], np.bool_),
    )
    if end_time is None:
        end_time = rows[-1][0] if rows else 0.0
    shell = Trajectory(
        params=params, initial=initial, events=events, final=initial,
        end_time=float(end_time), absorbed=absorbed, capped=False,
        engine=engine, seed=0, horizon=float("inf"), event_cap=10**9,
        events_generated=len(rows), n_effective=sum(int(r[6]) for r in rows),
    )
    final = replay(shell, validate=False)
    import dataclasses

    return dataclasses.replace(shell, final=final)


@pytest.fixture(scope="session")
def small_params():
    return ModelParams(F=2, q=3, L=60)
