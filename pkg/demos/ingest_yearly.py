"""
From dated coordinates to yearly sequences
==========================================

Raw records carry a date, a latitude/longitude pair and an integer group.
They are mapped to [-1, 1]^2, filtered against a region polygon and cut into
one sequence per calendar year, timed in days since January 1.
"""

import datetime as dt

import numpy as np

from mstnhp.core import Polygon
from mstnhp.dataio import filter_polygon, normalize_coordinates, yearly_split

rng = np.random.default_rng(0)
n = 300
dates = [dt.date(2010, 1, 1) + dt.timedelta(days=int(d)) for d in rng.integers(0, 3 * 365, n)]
lonlat = np.column_stack([rng.uniform(-8, 4, n), rng.uniform(30, 38, n)])
groups = rng.integers(1, 3, n)

###############################################################################
# Box edges go to +-1 on each axis; the transform is kept for inversion.
box = (-8.0, 4.0, 30.0, 38.0)
pts, transform = normalize_coordinates(lonlat, box)
print("scale", transform.scale, "offset", transform.offset)

###############################################################################
# A triangular region, given in raw coordinates and mapped the same way.
region = Polygon(tuple(map(tuple, transform.forward([[-8, 30], [4, 30], [-2, 38]]))))
keep, rejected = filter_polygon(pts, region)
print(f"kept {keep.sum()}, rejected {rejected}")

###############################################################################
# Same-day events keep their input order, spaced 1e-3 days apart.
kept_dates = [d for d, k in zip(dates, keep) if k]
seqs = yearly_split(kept_dates, groups[keep], pts[keep], years=[2010, 2011, 2012], domain=region)
for year, s in zip((2010, 2011, 2012), seqs):
    print(year, len(s), "events, first at day", s.times[0] if len(s) else None)
