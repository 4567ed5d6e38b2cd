"""q8s: run code-cell payloads as containerized jobs on a GPU-capable cluster.

The package bundles a dense statevector simulation kit for three benchmark
routines (QFT, quantum volume, QAOA max-cut), the cell-to-job dispatch
pipeline (dependency detection, image caching, Job/ConfigMap manifests,
submit/poll/cleanup), an in-process fake cluster for desk-scale testing,
a notebook kernel speaking the standard wire protocol, and a benchmark
harness that splits wall time into simulator and overhead components.
"""

__version__ = "0.1.0"

KERNEL_PROTOCOL_VERSION = "5.3"
