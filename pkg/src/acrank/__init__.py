"""Query autocompletion ranking: session mining, embeddings, features, a
pairwise-trained neural ranker, popularity baselines, offline evaluation,
and an HTTP suggestion service.
"""

__version__ = "0.1.0"
