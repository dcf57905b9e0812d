"""
Adapters module: PEFT modules and adapter portability
"""
from .config import AdapterConfig, AdapterKind, InitMode, adapter_parameter_count, adapter_tensor_shapes
from .portability import (
    AdapterWeights,
    adapter_fraction,
    attach,
    export_adapter,
    import_adapter,
    install_adapter,
    load_adapter,
    record_adapter_stage,
    save_adapter,
)

__all__ = [
    'AdapterConfig', 'AdapterKind', 'InitMode', 'adapter_parameter_count', 'adapter_tensor_shapes',
    'AdapterWeights', 'adapter_fraction', 'attach', 'export_adapter', 'import_adapter',
    'install_adapter', 'load_adapter', 'record_adapter_stage', 'save_adapter',
]
