"""
Encoding and decoding multisets
===============================

A multiset of at most M points in R^d becomes one fixed-width vector by summing
monomials of each point. The map is injective, and this script shows it by
inverting it.
"""
import numpy as np

from setinject import decode_multiset, encode_multiset, make_rng, random_premix

###############################################################################
# Scalars first. The encoding of {1, 2} with M = 2 holds the element count,
# the sum and the sum of squares.
enc = encode_multiset([[1.0], [2.0]], M=2)
print("encoding of {1, 2}:", enc.values)
print("decoded:", decode_multiset(enc).elements.ravel())

###############################################################################
# Repeats are kept. {0.5, 0.5, -0.25} comes back with 0.5 twice.
enc = encode_multiset([[0.5], [0.5], [-0.25]], M=4)
print("with a repeat:", decode_multiset(enc).elements.ravel())

###############################################################################
# Points in the plane. Block 0 of the encoding holds the power sums of the
# first coordinate and block j holds x1^q * xj. The first coordinates are
# recovered as polynomial roots. The remaining coordinates then solve a
# Vandermonde system.
X = np.array([[0.2, 0.9], [-0.7, 0.1], [0.5, -0.4]])
enc = encode_multiset(X, M=3)
res = decode_multiset(enc)
print(res.status.value, "\n", res.elements)

###############################################################################
# When two points share a first coordinate, the other coordinates are only
# determined up to their sum within the tie. The decoder says so instead of
# guessing.
res = decode_multiset(encode_multiset([[1.0, 4.0], [1.0, 6.0]], M=2))
print(res.status.value, [(g.value, g.multiplicity, g.sums.tolist()) for g in res.group_sums])

###############################################################################
# A random rotation applied before encoding breaks such ties with probability one.
rng = make_rng(0)
P = random_premix(2, rng)
res = decode_multiset(encode_multiset([[1.0, 4.0], [1.0, 6.0]], M=2, premix=P))
print("with premix:", res.status.value, "\n", np.round(res.elements, 10))

###############################################################################
# Vectors that are not encodings of anything get rejected. A count of 1.7
# makes no sense.
from setinject import PowerEncoding

print(decode_multiset(PowerEncoding(np.array([1.7, 3.0, 5.0]), 1, 2)).message)
