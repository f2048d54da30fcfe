from tests.resources.fixtures.network import net, batch
from tests.resources.fixtures.data import bundle, view
from tests.resources.fixtures.features import features
from tests.resources.fixtures.grouper import grouper

__all__ = ["net", "batch", "bundle", "view", "features", "grouper"]
