"""Shared fixtures and the acceptance-verdict summary hook."""

from __future__ import annotations

import pytest

from arena2x2.agents import AgentSpec
from arena2x2.providers import PolicyMockProvider, ProviderParams, ProviderRegistry

ACCEPTANCE_VERDICTS: list[tuple[int, str, bool]] = []


def record_verdict(number: int, description: str, passed: bool) -> None:
    ACCEPTANCE_VERDICTS.append((number, description, passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, passed in sorted(ACCEPTANCE_VERDICTS):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {verdict}: {description}")


def build_mock_registry() -> ProviderRegistry:
    """Three deterministic engines that answer by parsing their prompts."""
    registry = ProviderRegistry()
    policies = [
        ("engine-a", AgentSpec.constant(0)),
        ("engine-b", AgentSpec.defect_then_cooperate()),
        ("engine-c", AgentSpec.alternator()),
    ]
    for provider_id, policy in policies:
        registry.register(PolicyMockProvider(provider_id, policy), ProviderParams(model="mock"))
    return registry


@pytest.fixture
def mock_registry() -> ProviderRegistry:
    return build_mock_registry()
