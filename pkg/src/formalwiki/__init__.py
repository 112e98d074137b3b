"""Wiki engine for formal libraries.

Stores versioned formal articles, verifies them incrementally using
item-level dependency tracking, sandboxes every change in copy-on-write
snapshots, enforces multi-user branch policies, and mirrors accepted
changes across peer servers.
"""

__version__ = "0.1.0"
