"""Published error tables for the two benchmarks on N x N meshes, N = 2..64.

Keys are ``(case, epsilon, sigma)``; each entry maps a column name to six
values (or five rates, which start at N = 4). ``None`` marks a rate that was
not published.
"""

LEVELS = (2, 4, 8, 16, 32, 64)

TABLES = {
    ("example1", 10.0, 1.0): {
        "l2": (0.3338, 0.0936, 0.0210, 0.0053, 0.0013, 0.0003),
        "rate_l2": (1.8344, 2.1561, 1.9863, 2.0275, 2.1155),
        "h1": (2.8105, 1.4096, 0.6562, 0.3292, 0.1644, 0.0821),
        "rate_h1": (0.9955, 1.1031, 0.9952, 1.0018, 1.0018),
        "star": (8.7438, 4.4488, 2.0741, 1.0408, 0.5198, 0.2595),
        "rate_star": (0.9748, 1.1009, 0.9948, 1.2224, 1.2224),
    },
    ("example1", 10.0, 0.0): {
        "l2": (0.3617, 0.0937, 0.0210, 0.0053, 0.0013, 0.0003),
        "rate_l2": (1.9487, 2.1577, 1.9863, 2.0275, 2.1155),
        "h1": (2.8103, 1.4093, 0.6561, 0.3291, 0.1644, 0.0820),
        "rate_h1": (0.9911, 1.1030, 0.9954, 1.0013, 1.0035),
        "star": (8.8076, 4.4476, 2.0737, 1.0406, 0.5197, 0.2594),
        "rate_star": (0.9857, 1.1008, 0.9948, 1.0017, 1.0025),
    },
    ("example1", 1e-6, 1.0): {
        "l2": (0.3211, 0.0856, 0.0195, 0.0045, 0.0011, 0.0003),
        "rate_l2": (1.9073, 2.1341, 2.1155, 2.0324, 2.0265),
        "h1": (3.8912, 1.9915, 0.9815, 0.4912, 0.2452, 0.1225),
        "rate_h1": (0.9664, 1.0208, 0.9987, 1.0024, 1.0012),
        "star": (1.6094, 0.8184, 0.4006, 0.2059, 0.1039, 0.0522),
        "rate_star": (0.9756, 1.0306, 0.9602, 0.9867, 0.9931),
    },
    ("example1", 1e-6, 0.0): {
        "l2": (0.3210, 0.0839, 0.0199, 0.0046, 0.0011, 0.0003),
        "rate_l2": (1.9358, 2.0759, 2.1131, 2.0641, 2.0265),
        "h1": (3.9012, 1.9693, 0.9833, 0.4862, 0.2427, 0.1212),
        "rate_h1": (0.9862, 1.0020, 1.0161, 1.0024, 1.0018),
        "star": (1.6080, 0.8114, 0.4024, 0.2013, 0.1006, 0.0501),
        "rate_star": (0.9868, 1.0118, 0.9993, 1.0007, 0.9971),
    },
    ("example2", 10.0, 1.0): {
        "l2": (3.2e-05, 9.9e-06, 2.6e-06, 6.6e-07, 1.6e-07, 4.0e-08),
        "rate_l2": (1.6926, 1.9289, 1.9780, 2.0444, 2.0000),
        "h1": (2.7e-04, 1.3e-04, 7.0e-05, 3.5e-05, 1.8e-05, 8.8e-06),
        "rate_h1": (0.9952, 0.9494, 0.9938, 1.0000, 0.9918),
        "star": (8.5e-04, 4.3e-04, 2.2e-04, 1.1e-04, 5.5e-05, 2.8e-05),
        "rate_star": (0.9956, 0.9494, 0.9928, 1.0000, 1.0000),
    },
    ("example2", 0.1, 1.0): {
        "l2": (0.1644, 0.0417, 0.0120, 0.0034, 0.0009, 0.0002),
        "rate_l2": (1.9791, 1.7970, 1.8194, 1.9175, 2.1699),
        "h1": (1.9810, 1.0005, 0.5005, 0.2676, 0.1343, 0.0668),
        "rate_h1": (0.9855, 0.9993, 0.9033, 0.9946, 1.0075),
        "star": (0.6049, 0.3201, 0.1612, 0.0847, 0.0425, 0.0211),
        "rate_star": (0.9182, 0.9897, 0.9284, 0.9949, 1.0102),
    },
    ("example2", 1e-6, 1.0): {
        "l2": (0.3049, 0.2593, 0.2049, 0.1548, 0.1136, 0.0809),
        "rate_l2": (0.2331, 0.3397, 0.4045, 0.4464, 0.4898),
        "h1": (3.2874, 2.8286, 1.9776, 1.3927, 1.0316, 0.9336),
        "rate_h1": (None,) * 5,
        "star": (0.5847, 0.5550, 0.5203, 0.4694, 0.4646, 0.4119),
        "rate_star": (None,) * 5,
    },
}


def table(case: str, epsilon: float, sigma: float) -> dict:
    try:
        return TABLES[(case, float(epsilon), float(sigma))]
    except KeyError:
        raise KeyError(f"no reference table for {case}, eps={epsilon:g}, sigma={sigma:g}") from None


def value(case: str, epsilon: float, sigma: float, column: str, n: int):
    return table(case, epsilon, sigma)[column][LEVELS.index(n)]


def rate_value(case: str, epsilon: float, sigma: float, column: str, n: int):
    """Published rate between ``n/2`` and ``n``."""
    return table(case, epsilon, sigma)["rate_" + column][LEVELS.index(n) - 1]
