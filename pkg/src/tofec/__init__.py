"""Backlog-adaptive erasure-coded access to object storage.

Submodules: `delay_model`, `trace`, `analysis`, `solver`, `strategies`,
`simulator`, `codec`, `storage`, `config`, `experiments` and `cli`.
"""

__version__ = "0.1.0"
