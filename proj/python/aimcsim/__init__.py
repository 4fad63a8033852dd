from ._aimcsim import *  # noqa: F401,F403
