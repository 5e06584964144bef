from fractions import Fraction

from hypothesis import settings, strategies as st

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def rationals(max_num=10**6, max_den=10**4):
    return st.builds(Fraction, st.integers(-max_num, max_num), st.integers(1, max_den))
