import numpy as np

SIGNIFICANT_DIGITS = 9


def format_float(value):
    """
    Format a real number with 9 significant digits.

    Every numeric column written by the package (embedding files, vector
    exports, loss logs) goes through this function so that a value read back
    and written again yields the same text.

    Args:
        value (float): The number to format

    Returns:
        str: The formatted number, e.g. ``0.761594156`` or ``1.5e-05``
    """
    return f"{float(value):.{SIGNIFICANT_DIGITS}g}"


def make_rng(seed):
    """
    Build the numpy random generator used throughout the package.

    Args:
        seed (int | numpy.random.Generator): A seed, or an existing generator
            which is returned unchanged

    Returns:
        numpy.random.Generator: A PCG64 generator
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
