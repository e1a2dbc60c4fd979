"""Optional smoke test against a real chat-completions endpoint.

Deselected by default; run with ``pytest -m network`` after exporting
``LLMO_LIVE_ENDPOINT``, ``LLMO_LIVE_MODEL`` and the key variable named by
``LLMO_LIVE_KEY_ENV`` (default ``OPENAI_API_KEY``).
"""

import os

import numpy as np
import pytest

from llmo.agents import HttpLlmAgent, HttpLlmAgentConfig
from llmo.optimizer import LlmoConfig, run_llmo
from llmo.population import Box
from llmo.rewards import IfcModel, ifc_ee

pytestmark = pytest.mark.network


def test_live_endpoint_runs_a_few_iterations():
    endpoint = os.environ.get("LLMO_LIVE_ENDPOINT")
    if not endpoint:
        pytest.skip("LLMO_LIVE_ENDPOINT is not set")
    cfg = HttpLlmAgentConfig(endpoint, os.environ.get("LLMO_LIVE_MODEL", "default"),
                             api_key_env=os.environ.get("LLMO_LIVE_KEY_ENV", "OPENAI_API_KEY"))
    model = IfcModel(np.eye(2))
    trace = run_llmo(LlmoConfig(3, Box.uniform(2)), [HttpLlmAgent(cfg)], lambda x: float(ifc_ee(x, model)), T=3)
    assert len(trace) == 3
    assert np.all(np.diff(trace.best_rewards) >= 0)
