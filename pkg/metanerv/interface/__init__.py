"""Interface adapters (CLI, config files, reports) for the metanerv workflows."""
