from . import adapt, embed, evaluate, gen, warmup

__all__ = [
    "gen",
    "embed",
    "warmup",
    "adapt",
    "evaluate",
]
