import json

import pytest

from brainage import synth

# criterion number -> (PASS/FAIL, title, seconds, notes), filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, secs, notes = ACCEPTANCE[n]
        detail = "; ".join(notes)
        terminalreporter.write_line(f"criterion {n} {status}: {title} ({secs:.1f}s) {detail}".rstrip())


def small_corpus_config(n_subjects=50, seed=31):
    return synth.SynthConfig(n_subjects=n_subjects, n_channels=32, duration_ec_s=8.0, duration_eo_s=4.0, seed=seed)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 50-subject, 32-channel corpus with short recordings."""
    root = tmp_path_factory.mktemp("corpus")
    synth.generate_dataset(small_corpus_config(), root)
    return root


def write_experiment(path, corpus, output, **over):
    cfg = {
        "corpus": str(corpus), "montage": str(corpus / "montage.json"), "regions": str(corpus / "regions.json"),
        "seed": 5, "output": str(output), "variant": "12-All", "families": ["Lasso", "GBDT", "KNN"],
        "budget": 5, "folds": 3, "explain": {"background": 4, "max_samples": 5},
    }
    cfg.update(over)
    path.write_text(json.dumps(cfg))
    return path
