"""dreamcam: a real-time neural visual instrument.

Target-only training (inputs synthesized on the fly from target images via a
randomized preprocessing chain), a small conditional image-to-image model,
and a live performance loop steered over a websocket control protocol.
"""

__version__ = "0.1.0"
