import collections
import scipy


def prepare(x):
    return collections.OrderedDict(value=scipy.__version__), x
