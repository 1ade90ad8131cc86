"""dsedge: snapshot-interstitial edge system.

A forward proxy that serves pre-harvested, privacy-desensitized page
snapshots as instant interstitials, harvests crowd-sourced screenshots
from clients on the way through, and flips to the real page once a
background pre-render completes.
"""

from dsedge.config import DsConfig

__all__ = ["DsConfig"]
__version__ = "0.1.0"
