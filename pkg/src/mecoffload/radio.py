"""Geometry, path loss, block fading and FDMA uplink rates."""
from __future__ import annotations

import numpy as np

DEFAULT_MIN_DISTANCE_KM = 0.01


def dbm_to_watts(dbm):
    return 10.0 ** (dbm / 10.0) / 1000.0


def distance(u_server, u_user, d_min=DEFAULT_MIN_DISTANCE_KM):
    d = np.linalg.norm(np.asarray(u_server, dtype=float) - np.asarray(u_user, dtype=float), axis=-1)
    return np.maximum(d, d_min)


def channel_coefficient(u_server, u_user, gamma, g, d_min=DEFAULT_MIN_DISTANCE_KM):
    """h = g / d^(gamma/2), distance in km clamped below at ``d_min``."""
    if gamma < 2:
        raise ValueError(f"path-loss exponent must be >= 2, got {gamma}")
    return g / distance(u_server, u_user, d_min) ** (gamma / 2.0)


def achievable_rate(h, power, bandwidth, n_channels, noise_density):
    """Shannon rate (bits/s) of one W/N sub-band."""
    w = bandwidth / n_channels
    snr = np.abs(h) ** 2 * power / (w * noise_density)
    return w * np.log2(1.0 + snr)


def draw_fading(rng, shape):
    """CN(0, 1) small-scale fading."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def rate_matrix(u_user, server_positions, rng, *, gamma, power, bandwidth, n_channels,
                noise_density, d_min=DEFAULT_MIN_DISTANCE_KM):
    """M x N rates with one independent fading draw per (server, channel)."""
    servers = np.atleast_2d(np.asarray(server_positions, dtype=float))
    if len(servers) == 0:
        raise ValueError("need at least one server")
    g = draw_fading(rng, (len(servers), n_channels))
    d = distance(servers, u_user, d_min)
    h = g / (d ** (gamma / 2.0))[:, None]
    return achievable_rate(h, power, bandwidth, n_channels, noise_density)


def best_free_channel(busy, rates):
    """Index of the highest-rate free channel, or None if all are busy.

    Ties go to the lowest index.
    """
    busy = np.asarray(busy, dtype=bool)
    rates = np.asarray(rates, dtype=float)
    if busy.all():
        return None
    masked = np.where(busy, -np.inf, rates)
    return int(np.argmax(masked))


def nearest_servers(u_user, server_positions, count, d_min=DEFAULT_MIN_DISTANCE_KM):
    """The ``count`` closest server indices, ascending by distance then index."""
    servers = np.atleast_2d(np.asarray(server_positions, dtype=float))
    if not 1 <= count <= len(servers):
        raise ValueError(f"candidate count must be in [1, {len(servers)}], got {count}")
    d = distance(servers, u_user, d_min)
    order = np.lexsort((np.arange(len(d)), d))
    return [int(i) for i in order[:count]]
