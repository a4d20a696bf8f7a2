from .generate import (
    AreaTexture,
    PhantomConfig,
    PhantomDataset,
    default_textures,
    generate_phantom,
    sample_patches,
)
from .priors import assign_node_labels, border_mask, synth_priors
from .io import load_phantom, save_phantom
