"""Spatial fusion of LiDAR and camera BEV features: channel concat
(LiDAR first) followed by a 3x3 convolution back to C channels."""

import numpy as np

from .geometry import BevFeature, bev_to_map, map_to_bev
from .tensorops import ConvParams, concat_channels, conv2d


def fuse_spatial(b_lidar, b_camera, conv):
    if b_lidar.spec != b_camera.spec:
        raise ValueError("LiDAR and camera BEV specs must match")
    cat = concat_channels(bev_to_map(b_lidar.data), bev_to_map(b_camera.data))
    fused = conv2d(cat, conv)
    return BevFeature(b_lidar.spec, map_to_bev(fused))


def block_average_conv(channels):
    """Centered-delta kernel averaging the LiDAR and camera channel blocks."""
    kernel = np.zeros((channels, 2 * channels, 3, 3))
    for c in range(channels):
        kernel[c, c, 1, 1] = 0.5
        kernel[c, channels + c, 1, 1] = 0.5
    return ConvParams(kernel, np.zeros(channels))
