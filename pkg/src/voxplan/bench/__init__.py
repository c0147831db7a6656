from .runner import EpisodeResult, Report, run_episode, run_suite
from .report import emit, parse_report_csv, report_csv, report_summary
