"""
IEPG version constants.

This module defines version constants for the library and its on-disk
artifacts. Checkpoints and dataset indexes carry these so older files can be
recognised (or rejected) when loaded.
"""

# Library version (matches pyproject.toml)
IEPG_VERSION = "0.2.0"

# Binary checkpoint container version (u32 after the magic bytes)
# Increment when the tensor table layout changes in a breaking way
CHECKPOINT_FORMAT_VERSION = 1

# Schema tag written into dataset index files
DATASET_SCHEMA_VERSION = "turning_v0"
