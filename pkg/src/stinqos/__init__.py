"""Status-update delivery over satellite-terrestrial links under finite-blocklength HARQ.

Modules: ``channel`` (topology, link budget, SINR), ``fbc`` (decoding error
and error-rate exponent), ``harq`` (standard and fast HARQ), ``sim``
(discrete-event queue and AoI), ``metrics`` (tails, exponent fits, Mellin),
``config`` / ``pipeline`` / ``report`` / ``cli`` (experiment plumbing).
"""

__version__ = "0.1.0"
