"""Unit tests for directory helpers."""

import path


class TestDirectories:
    """Test run, log and cache locations."""

    def test_runs_directory_under_cwd(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        runs = path.get_runs_directory()
        assert runs == tmp_path / "runs"
        assert runs.is_dir()

    def test_user_directories(self, tmp_path, monkeypatch):
        monkeypatch.setattr(path.appdirs, "user_log_dir", lambda name: str(tmp_path / "log" / name))
        monkeypatch.setattr(path.appdirs, "user_cache_dir", lambda name: str(tmp_path / "cache" / name))

        assert path.get_logs_directory() == tmp_path / "log" / "spde-gkpinn"
        cache = path.get_cache_directory()
        assert cache == tmp_path / "cache" / "spde-gkpinn" / "references"
        assert cache.is_dir()
