# SPDX-FileCopyrightText: © 2026 The blockmdm Authors
#
# SPDX-License-Identifier: Apache-2.0
"""Block masked-diffusion talker toolkit."""

from ._blockmdm import (
    ContractError,
    DimensionError,
    InputError,
    LoadError,
    NumericError,
    ParameterError,
    Talker,
    gen_dataset,
    gradcheck,
    mask_stats,
    read_corpus,
    schedule_step,
    token_error_rate,
    write_corpus,
)

__all__ = [
    "ContractError",
    "DimensionError",
    "InputError",
    "LoadError",
    "NumericError",
    "ParameterError",
    "Talker",
    "gen_dataset",
    "gradcheck",
    "mask_stats",
    "read_corpus",
    "schedule_step",
    "token_error_rate",
    "write_corpus",
]
