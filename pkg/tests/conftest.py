"""Shared fixtures: the two-article reference library and ready-made nodes."""

import pytest

from formalwiki.corpus import reference_library, reference_sources
from formalwiki.node import WikiNode


@pytest.fixture
def ref_library():
    return reference_library()


@pytest.fixture
def ref_sources():
    return reference_sources()


def make_node(**kwargs):
    """A node on the reference library with the usual cast of users.

    urban is a superuser, mira a maintainer, dev a developer, alice a
    plain registered user.  root is a deployment admin.
    """
    kwargs.setdefault("admins", ("root",))
    kwargs.setdefault("workers", 2)
    node = WikiNode(**kwargs)
    node.add_user("urban", classes=("@users", "@superusers"))
    node.add_user("mira", classes=("@users", "@maintainers"))
    node.add_user("dev", classes=("@users", "@developers"))
    node.add_user("alice")
    node.init_from_library(reference_library())
    return node


@pytest.fixture
def node():
    n = make_node()
    yield n
    n.stop()
