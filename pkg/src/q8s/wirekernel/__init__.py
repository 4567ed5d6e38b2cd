"""Kernel wire-protocol server, messaging primitives, and a scripted frontend."""

from q8s.wirekernel.kernel import (
    KERNEL_DISPLAY_NAME,
    KERNELSPEC_NAME,
    KernelServer,
    KernelSettings,
    default_kernelspec_dir,
    install_kernelspec,
    serve_kernel,
    split_target_magic,
)
from q8s.wirekernel.messaging import (
    ConnectionInfo,
    WireMessage,
    generate_connection_info,
    load_connection_file,
    write_connection_file,
)

__all__ = [
    "KERNEL_DISPLAY_NAME",
    "KERNELSPEC_NAME",
    "KernelServer",
    "KernelSettings",
    "default_kernelspec_dir",
    "install_kernelspec",
    "serve_kernel",
    "split_target_magic",
    "ConnectionInfo",
    "WireMessage",
    "generate_connection_info",
    "load_connection_file",
    "write_connection_file",
]
