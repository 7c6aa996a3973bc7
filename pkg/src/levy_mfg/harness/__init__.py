"""Configuration, metrics, studies, invariant checks and the command line."""
