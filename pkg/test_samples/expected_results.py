"""
Expected results for validation - use these to check if your system is working correctly
"""

from fractions import Fraction

# Volumes of the sample definable sets as functions of the prime
VOLUMES = {
    'one': lambda p: Fraction(1),
    'zero': lambda p: Fraction(0),
    'maximal_ideal': lambda p: Fraction(1, p),
    'second_power': lambda p: Fraction(1, p ** 2),
    'units': lambda p: Fraction(p - 1, p),
    'valuation_one': lambda p: Fraction(p - 1, p ** 2),
    'residue_class': lambda p: Fraction(1, p),
    'two_residue_classes': lambda p: Fraction(p + 1, p ** 2),
    'half_units': lambda p: Fraction(p - 1, 2 * p),
    'two_residues': lambda p: Fraction(2, p),
    'units_but_one': lambda p: Fraction(p - 2, p),
    'even_ord_upto_two': lambda p: Fraction((p - 1) * (p ** 2 + 1), p ** 3),
    'product_in_ideal': lambda p: Fraction(2 * p - 1, p ** 2),
    'unit_pairs_on_hyperbola': lambda p: Fraction(p - 1, p ** 2),
}

EXPECTED_RESULTS = {

    # Sp(2) = SL(2): dimension, Iwahori volume and group volume
    'sp2': {
        'dim': 3,
        'matrix_size': 2,
        'iwahori_volume': lambda q: Fraction(q - 1, q ** 2),
        'group_volume': lambda q: Fraction((q - 1) * (q + 1), q ** 2),
        'order': lambda q: q * (q * q - 1),
    },

    # l_lambda for the Sp(2) multi-indices
    'sp2_lambda_lengths': {
        (0, 0): 0,
        (-1, 1): 1,
        (1, -1): 2,
        (-2, 2): 3,
        (2, -2): 4,
    },

    # Regularity of the sample matrices (discriminant 4 - tr^2 nonzero)
    'sp2_regular': {
        'identity': False,
        'regular_unipotent': False,
        'split_regular': True,
    },

    # Unipotent labels of Sp(2) over F_7
    'sp2_labels_at_7': ['(1,1)', '(2)[2:sq]', '(2)[2:nsq]'],
    'regular_unipotent_label_at_7': '(2)[2:nsq]',
    'so3_label_count': 2,

    # Cuspidal character of degree q - 1 on the unipotent classes
    'cuspidal_values': {
        '(1,1)': lambda q: Fraction(q - 1),
        '(2)[2:sq]': lambda q: Fraction(-1),
        '(2)[2:nsq]': lambda q: Fraction(-1),
    },

    # Gamma = G2 with bound 1 on Sp(2)
    'acceptance': {
        'gamma_volume': lambda q: Fraction(q - 1, q ** 4),
        'support': [(0, 0)],
        'value': lambda q: -Fraction((q - 1) ** 2, q ** 6),
        'value_at_5': Fraction(-16, 15625),
        'value_at_7': Fraction(-36, 117649),
        'motive': {-6: Fraction(-1), -5: Fraction(2), -4: Fraction(-1)},
        'fit_primes': [5, 7, 11, 13],
        'predict_primes': [17],
    },

    # Motive fits of the sample tables
    'motive_fits': {
        'one_minus_inverse': ({-1: Fraction(-1), 0: Fraction(1)}, ()),
        'one_minus_inverse_square': ({-2: Fraction(-1), 0: Fraction(1)}, ()),
        'geometric': ({0: Fraction(1)}, (1,)),
    },
}
