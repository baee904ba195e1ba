"""Agent controllers and sub-skill execution."""
