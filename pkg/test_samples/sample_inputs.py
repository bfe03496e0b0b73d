"""
Sample inputs for testing the p-adic character average system
"""

# Definable sets in one or two valued variables, with the ambient dimension
# and the key of their expected volume in expected_results.VOLUMES
SAMPLE_FORMULAS = [
    {'text': "ord(x) >= 0", 'dim': 1, 'volume': 'one'},
    {'text': "ord(x) >= 1", 'dim': 1, 'volume': 'maximal_ideal'},
    {'text': "ord(x) >= 2", 'dim': 1, 'volume': 'second_power'},
    {'text': "ord(x) = 0", 'dim': 1, 'volume': 'units'},
    {'text': "ord(x) = 1", 'dim': 1, 'volume': 'valuation_one'},
    {'text': "ord(x) = 0 /\\ ac(x) = 1", 'dim': 1, 'volume': 'residue_class'},
    {'text': "ord(x) <= 1 /\\ ac(x) = 1", 'dim': 1, 'volume': 'two_residue_classes'},
    {'text': "exists a:r. ord(x) = 0 /\\ ac(x) = a*a", 'dim': 1, 'volume': 'half_units'},
    {'text': "ord(x) = 0 /\\ !(exists a:r. ac(x) = a*a)", 'dim': 1, 'volume': 'half_units'},
    {'text': "ord(x) = 0 /\\ (forall a:r. ac(x) != a*a)", 'dim': 1, 'volume': 'half_units'},
    {'text': "ord(x - 1) >= 1", 'dim': 1, 'volume': 'maximal_ideal'},
    {'text': "ord(x*x - 1) >= 1", 'dim': 1, 'volume': 'two_residues'},
    {'text': "ord(x) = 0 /\\ ord(x + 1) >= 1", 'dim': 1, 'volume': 'maximal_ideal'},
    {'text': "ord(x) = 0 /\\ ac(x) != 1", 'dim': 1, 'volume': 'units_but_one'},
    {'text': "cong(2; ord(x), 0) /\\ ord(x) <= 2", 'dim': 1, 'volume': 'even_ord_upto_two'},
    {'text': "exists z:z. 0 <= z /\\ z <= 1 /\\ ord(x) = z + z", 'dim': 1, 'volume': 'even_ord_upto_two'},
    {'text': "ord(x) >= 1 /\\ ord(x) <= 0", 'dim': 1, 'volume': 'zero'},
    {'text': "ord(x) >= 1 /\\ ord(y) >= 1", 'dim': 2, 'volume': 'second_power'},
    {'text': "ord(x*y) >= 1", 'dim': 2, 'volume': 'product_in_ideal'},
    {'text': "ord(x) >= 1 \\/ ord(y) >= 1", 'dim': 2, 'volume': 'product_in_ideal'},
    {'text': "ord(x) = 0 /\\ ord(y) = 0 /\\ ac(x*y) = 1", 'dim': 2, 'volume': 'unit_pairs_on_hyperbola'},
    {'text': "ord(x) = 0 /\\ ord(x + y) >= 1", 'dim': 2, 'volume': 'unit_pairs_on_hyperbola'},
]

# Texts the parser or the sort checker must reject
SYNTAX_ERRORS = [
    "ord(x) >=",
    "ord(x) >= 1 /\\",
    "ord(x) ? 1",
    "exists a:r ac(x) = a",
    "(ord(x) >= 1",
]

SORT_ERRORS = [
    "ac(x) <= 1",
    "ord(x) = x",
    "ac(x) + ord(y) = 0",
    "cong(0; ord(x), 0)",
    "ord(ac(x)) >= 0",
]

# Quantifier-free and residue-quantified formulas run against the
# exhaustive-substitution oracle
ORACLE_FORMULAS = [
    "ord(x) >= 1",
    "ord(x - 1) >= 2",
    "ord(x) = 0 /\\ ac(x) = 2",
    "exists a:r. ord(x) = 0 /\\ ac(x) = a*a",
    "ord(x*y) >= 2",
    "ord(x + y) <= ord(x)",
    "cong(2; ord(x*x*x), 1)",
    "x = 0",
    "ac(x + 1) = 1",
]

# Residue-field formulas with one hole, lowered at x
RESIDUE_LOWERINGS = [
    {'phi': "h:r = 1", 'shift': 0},
    {'phi': "exists a:r. h:r = a*a", 'shift': 0},
    {'phi': "h:r = 0", 'shift': 1},
]

# Integer matrices for the unipotent-class and regularity checks on Sp(2)
SP2_MATRICES = {
    'identity': [[1, 0], [0, 1]],
    'regular_unipotent': [[1, 1], [0, 1]],
    'lower_unipotent': [[1, 0], [1, 1]],
    'split_regular': [[2, 1], [1, 1]],
    'not_unipotent': [[2, 0], [0, 4]],
}

# Lambda multi-indices of Sp(2) in the order valid_multi_indices returns them
SP2_LAMBDAS = [(-2, 2), (-1, 1), (0, 0), (1, -1), (2, -2)]

# Rows (p, value) whose fits are known
MOTIVE_SAMPLES = {
    'one_minus_inverse': [(5, '4/5'), (7, '6/7'), (11, '10/11')],
    'one_minus_inverse_square': [(5, '24/25'), (7, '48/49'), (11, '120/121'), (13, '168/169')],
    'geometric': [(5, '1/4'), (7, '1/6'), (11, '1/10'), (13, '1/12')],
}

# A flat run configuration as the CLI reads it
SAMPLE_CONFIG = {
    'group': 'sp',
    'rank': 1,
    'w': '(1)',
    'alpha': 'G2',
    'gamma_bound': 1,
    'primes': [5],
    'kinds': ['mixed'],
    'depth': 1,
    'max_depth': 8,
    'lambda_bound': 2,
    'format': 'json',
}
