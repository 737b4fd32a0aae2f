"""Outfit grading and recommendation from a personal closet.

Scores arbitrary variable-size combinations of clothing items with a
learned fixed-length representation and recommends top outfits from an
item pool via beam search. Ships a synthetic closet-world generator with
a known compatibility oracle so the whole pipeline can be exercised and
verified at desk scale.
"""

__version__ = "0.1.0"
