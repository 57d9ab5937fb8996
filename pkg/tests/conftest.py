import pytest

from failsift import Campaign

from helpers import make_trace


@pytest.fixture
def tiny_campaign():
    """Three labeled experiments plus two fault-free reference runs."""
    fault_injected = (
        make_trace("exp-1", ["boot", "attach", "ssh"]),
        make_trace("exp-2", ["boot", "attach", "error", "ssh"]),
        make_trace("exp-3", ["boot", "ssh"]),
    )
    fault_free = (
        make_trace("ff-1", ["boot", "attach", "ssh"], fault_free=True),
        make_trace("ff-2", ["boot", "attach", "ssh"], fault_free=True),
    )
    return Campaign(
        workload_id="tiny",
        fault_injected=fault_injected,
        fault_free=fault_free,
        ground_truth={"exp-1": "NoFailure", "exp-2": "VolumeFailure", "exp-3": "SshFailure"},
    )
