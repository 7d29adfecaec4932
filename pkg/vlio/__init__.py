"""
.. module:: vlio
    :platform: Unix
    :synopsis: Vibration-aware LiDAR-inertial odometry

"""

import vlio.manifold
import vlio.propagation
import vlio.uncertainty
import vlio.mapping
import vlio.ikf
import vlio.sim
