"""Sub-task and sub-skill planning."""
