"""Distill LDA topic inference into small feed-forward networks.

The teacher (`lda`) is trained by variational EM on term-frequency vectors
built by `corpus`; the student (`distill`) learns to reproduce the
teacher's topic mixtures from the same input via soft-target cross
entropy.  `evalsuite` measures how faithful and how much faster the
student is, `probe` inspects what its hidden neurons learned, and
`pipeline`/`cli` tie a full experiment together.
"""

from . import _kernels, corpus, distill, evalsuite, lda, pipeline, probe  # noqa: F401
from ._kernels import available_backends, default_backend_name  # noqa: F401

__version__ = "0.1.0"
