"""Shared pytest wiring: per-criterion pass/fail lines for the acceptance suite."""

ACCEPTANCE_CRITERIA = [
    ("test_engine_exactness", "engine exactness"),
    ("test_steady_state", "steady state"),
    ("test_disruption_signature", "disruption signature"),
    ("test_hmm_oracles", "hmm oracles"),
    ("test_pca_oracle", "pca oracle"),
    ("test_state_phase_recovery", "state/phase recovery"),
    ("test_type_recovery", "type recovery"),
    ("test_chi_square_oracle", "chi-square oracle"),
    ("test_end_to_end_determinism", "end-to-end determinism"),
]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    for status, verdict in (
        ("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL"), ("skipped", "SKIP"),
    ):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            # a FAIL from any phase (setup/call/teardown) wins over PASS
            if outcomes.get(name) != "FAIL":
                outcomes[name] = verdict
    lines = [
        f"{desc}: {outcomes[name]}"
        for name, desc in ACCEPTANCE_CRITERIA
        if name in outcomes
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
