"""History-aware extractive summarization trained with policy gradients.

Subpackages and modules:
    corpus       dataset ingestion, vocabulary, embeddings, padding
    rouge        ROUGE-1/2/L F1 and the episode reward
    oracle       high-score episode-set construction and sampling
    autodiff     reverse-mode automatic differentiation and Adam
    policy       the sentence-extraction policy network
    training     REINFORCE training loop and checkpointing
    inference    deterministic extraction, threshold sweep, evaluation
    experiments  ablation variants, redundancy study, rank statistics
    evalsvc      pairwise human-evaluation HTTP service
    cli          command-line entry point
    kernels      compiled scoring kernels with pure-Python fallback
"""

__version__ = "0.1.0"
