"""User surface: configuration, CLI subcommands, metrics emission."""
