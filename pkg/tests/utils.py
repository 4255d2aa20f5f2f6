import numpy as np

from harnacklab import elliptic


def sector_harmonic(opening: float):
    """r^alpha cos(alpha phi), phi measured from the bisector; zero on both edges."""
    alpha = np.pi / opening

    def func(points):
        r = np.linalg.norm(points, axis=-1)
        phi = np.arctan2(points[..., 0], points[..., 1])
        return r ** alpha * np.cos(alpha * phi)

    return func


def field(grid, func):
    return elliptic.ScalarField.from_function(grid, func)


def recording(func):
    """Boundary data that remembers every value it hands out."""
    seen = []

    def data(points):
        values = func(points)
        seen.append(values)
        return values

    return data, seen
