# Copyright 2026 The osp-kit Authors
# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the osp-kit core library."""

from ._ospkit import *  # noqa: F401,F403
from ._ospkit import __version__  # noqa: F401
