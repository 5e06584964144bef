"""Master-slave machines: exact Cauchy streams, type-two oracle machines,
fine-tuning over the reals, recursion schemes, effective set codes and the
Kleene normal form.
"""

from . import numerics, cauchy, tte, finetune, msvm, schemes, sets, normalform

__all__ = ["numerics", "cauchy", "tte", "finetune", "msvm", "schemes", "sets", "normalform"]
