from .attention import MultiHeadAttention, TokenFCN, adain, attention, attention_weights
from .discriminator import ImageDiscriminator
from .fusion import (
    VARIANT_DEPTHS,
    EvolutionFrame,
    EvolutionSequence,
    FusionConfig,
    FusionModel,
    SfeBlock,
    SourceBundle,
    TargetBundle,
    TpkfBlock,
    count_parameters,
    guiding_skeletons,
    image_discriminate,
    remove_intermediates,
    sfe_block,
    source_path,
    synthesize_full,
    synthesize_step,
    tpkf_block,
)
from .gec import (
    GecConfig,
    GecModel,
    evolve_sequence,
    gen_semantic_sequence,
    pose_decode,
    pose_encode,
    seq_discriminate,
)
from .iec import (
    IeBlock,
    IecEncoder,
    IntermediateQueue,
    assemble_input,
    ie_block_forward,
    iec_forward,
    update_queue,
)

__all__ = [
    # Global evolution
    "GecConfig",
    "GecModel",
    "pose_encode",
    "evolve_sequence",
    "pose_decode",
    "seq_discriminate",
    "gen_semantic_sequence",
    # Incremental evolution
    "IntermediateQueue",
    "IeBlock",
    "IecEncoder",
    "update_queue",
    "assemble_input",
    "ie_block_forward",
    "iec_forward",
    # Knowledge fusion
    "attention",
    "attention_weights",
    "MultiHeadAttention",
    "TokenFCN",
    "adain",
    "FusionConfig",
    "FusionModel",
    "VARIANT_DEPTHS",
    "SourceBundle",
    "TargetBundle",
    "SfeBlock",
    "TpkfBlock",
    "sfe_block",
    "tpkf_block",
    "source_path",
    "synthesize_step",
    "synthesize_full",
    "guiding_skeletons",
    "remove_intermediates",
    "image_discriminate",
    "count_parameters",
    "EvolutionFrame",
    "EvolutionSequence",
    "ImageDiscriminator",
]
