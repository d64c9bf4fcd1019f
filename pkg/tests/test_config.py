from src.config import Config, config


def test_defaults_are_valid():
    assert config.validate() == []
    assert config.VI_TOL > 0
    assert config.OUTPUT_DIR


def test_validate_reports_problems(monkeypatch):
    monkeypatch.setattr(Config, "VI_MAX_ITER", 0)
    monkeypatch.setattr(Config, "LOG_LEVEL", "LOUD")
    problems = Config.validate()
    assert any("BVI_MAX_ITER" in p for p in problems)
    assert any("LOUD" in p for p in problems)
