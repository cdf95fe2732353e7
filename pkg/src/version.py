"""Version information for the spleenlen toolkit."""

VERSION = "1.0.0"
