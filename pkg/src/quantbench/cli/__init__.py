"""File formats, configuration, benchmark orchestration and the command line."""
