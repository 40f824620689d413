//! Toy architectures that are actually trained, plus shape-only reference
//! generators used for MACs accounting.

use super::spec::{Activation, LayerSpec, NetworkRole, NetworkSpec, SkipMode};

/// Generator taps used for distillation on the ring task.
pub const RING_G_TAPS: [&str; 2] = ["g_act2", "g_act3"];
/// Discriminator taps used for distillation on the ring task.
pub const RING_D_TAPS: [&str; 2] = ["d_act1", "d_act2"];

/// 4-layer MLP generator for 2-D mixtures: three Linear-BN-ReLU blocks and
/// a linear output layer.
pub fn ring_generator(z_dim: usize, ngf: usize) -> NetworkSpec {
    let mut layers = Vec::new();
    let mut width = z_dim;
    for i in 1..=3 {
        layers.push(LayerSpec::linear(width, ngf));
        layers.push(LayerSpec::batch_norm(ngf));
        layers.push(LayerSpec::activation(Activation::Relu, ngf).tap(&format!("g_act{i}")));
        width = ngf;
    }
    layers.push(LayerSpec::linear(ngf, 2));
    NetworkSpec::new("ring-generator", NetworkRole::Generator, vec![z_dim], layers)
}

/// 4-layer MLP discriminator for 2-D mixtures with LeakyReLU(0.2).
pub fn ring_discriminator(ndf: usize) -> NetworkSpec {
    let mut layers = Vec::new();
    let mut width = 2;
    for i in 1..=3 {
        layers.push(LayerSpec::linear(width, ndf));
        layers.push(LayerSpec::activation(Activation::LeakyRelu, ndf).tap(&format!("d_act{i}")));
        width = ndf;
    }
    layers.push(LayerSpec::linear(ndf, 1));
    NetworkSpec::new("ring-discriminator", NetworkRole::Discriminator, vec![2], layers)
}

/// DCGAN-style generator: `z` as `[nz, 1, 1]` through transposed convs to
/// `[channels, size, size]` (size a power of two ≥ 16), tanh output.
pub fn dcgan_generator(size: usize, nz: usize, ngf: usize, channels: usize) -> NetworkSpec {
    assert!(size.is_power_of_two() && size >= 16, "size must be a power of two >= 16");
    let mut mult = size / 8;
    let mut layers = vec![
        LayerSpec::conv_transpose(nz, ngf * mult, 4, 1, 0),
        LayerSpec::batch_norm(ngf * mult),
        LayerSpec::activation(Activation::Relu, ngf * mult).tap("g_act1"),
    ];
    let mut spatial = 4;
    let mut tap = 2;
    while spatial * 2 < size {
        layers.push(LayerSpec::conv_transpose(ngf * mult, ngf * mult / 2, 4, 2, 1));
        mult /= 2;
        layers.push(LayerSpec::batch_norm(ngf * mult));
        layers.push(LayerSpec::activation(Activation::Relu, ngf * mult).tap(&format!("g_act{tap}")));
        spatial *= 2;
        tap += 1;
    }
    layers.push(LayerSpec::conv_transpose(ngf * mult, channels, 4, 2, 1));
    layers.push(LayerSpec::activation(Activation::Tanh, channels));
    NetworkSpec::new("dcgan-generator", NetworkRole::Generator, vec![nz, 1, 1], layers)
}

/// DCGAN-style discriminator: stride-2 4×4 convs down to 4×4, then a 4×4
/// valid conv to one logit per sample.
pub fn dcgan_discriminator(size: usize, ndf: usize, channels: usize) -> NetworkSpec {
    assert!(size.is_power_of_two() && size >= 16, "size must be a power of two >= 16");
    let mut layers = Vec::new();
    let (mut c_in, mut c_out, mut spatial, mut tap) = (channels, ndf, size, 1);
    while spatial > 4 {
        layers.push(LayerSpec::conv(c_in, c_out, 4, 2, 1));
        layers.push(LayerSpec::activation(Activation::LeakyRelu, c_out).tap(&format!("d_act{tap}")));
        spatial /= 2;
        c_in = c_out;
        c_out *= 2;
        tap += 1;
    }
    layers.push(LayerSpec::conv(c_in, 1, 4, 1, 0));
    NetworkSpec::new(
        "dcgan-discriminator",
        NetworkRole::Discriminator,
        vec![channels, size, size],
        layers,
    )
}

/// ResNet generator with 9 residual blocks (CycleGAN, 256×256).
/// Reflection padding is modelled as zero padding of the same width.
pub fn cyclegan_resnet_generator(ngf: usize) -> NetworkSpec {
    let relu = |c| LayerSpec::activation(Activation::Relu, c);
    let mut layers = vec![
        LayerSpec::conv(3, ngf, 7, 1, 3),
        LayerSpec::batch_norm(ngf),
        relu(ngf),
        LayerSpec::conv(ngf, ngf * 2, 3, 2, 1),
        LayerSpec::batch_norm(ngf * 2),
        relu(ngf * 2),
        LayerSpec::conv(ngf * 2, ngf * 4, 3, 2, 1),
        LayerSpec::batch_norm(ngf * 4),
        relu(ngf * 4).tap("block0"),
    ];
    let c = ngf * 4;
    for b in 1..=9 {
        layers.push(LayerSpec::conv(c, c, 3, 1, 1));
        layers.push(LayerSpec::batch_norm(c));
        layers.push(relu(c));
        layers.push(LayerSpec::conv(c, c, 3, 1, 1));
        layers.push(
            LayerSpec::batch_norm(c)
                .skip(&format!("block{}", b - 1), SkipMode::Add)
                .tap(&format!("block{b}")),
        );
    }
    layers.extend([
        LayerSpec::conv_transpose(c, ngf * 2, 3, 2, 1).with_output_padding(1),
        LayerSpec::batch_norm(ngf * 2),
        relu(ngf * 2),
        LayerSpec::conv_transpose(ngf * 2, ngf, 3, 2, 1).with_output_padding(1),
        LayerSpec::batch_norm(ngf),
        relu(ngf),
        LayerSpec::conv(ngf, 3, 7, 1, 3),
        LayerSpec::activation(Activation::Tanh, 3),
    ]);
    NetworkSpec::new("cyclegan-resnet-generator", NetworkRole::Generator, vec![3, 256, 256], layers)
}

/// U-Net generator with 8 down / 8 up stages (Pix2Pix, 256×256).
pub fn pix2pix_unet_generator(ngf: usize) -> NetworkSpec {
    let enc_out = [ngf, ngf * 2, ngf * 4, ngf * 8, ngf * 8, ngf * 8, ngf * 8, ngf * 8];
    let mut layers = Vec::new();
    let mut c_in = 3;
    for (i, &c) in enc_out.iter().enumerate() {
        if i > 0 {
            layers.push(LayerSpec::activation(Activation::LeakyRelu, c_in));
        }
        let conv = LayerSpec::conv(c_in, c, 4, 2, 1);
        if i == 0 || i == enc_out.len() - 1 {
            layers.push(conv.tap(&format!("enc{}", i + 1)));
        } else {
            layers.push(conv);
            layers.push(LayerSpec::batch_norm(c).tap(&format!("enc{}", i + 1)));
        }
        c_in = c;
    }
    // Decoder stage k mirrors encoder stage 8-k and concatenates its output.
    for k in 1..enc_out.len() {
        let skip_from = enc_out.len() - k;
        let c = enc_out[skip_from - 1];
        layers.push(LayerSpec::activation(Activation::Relu, c_in));
        layers.push(LayerSpec::conv_transpose(c_in, c, 4, 2, 1));
        layers.push(LayerSpec::batch_norm(c).skip(&format!("enc{skip_from}"), SkipMode::Concat));
        c_in = 2 * c;
    }
    layers.push(LayerSpec::activation(Activation::Relu, c_in));
    layers.push(LayerSpec::conv_transpose(c_in, 3, 4, 2, 1));
    layers.push(LayerSpec::activation(Activation::Tanh, 3));
    NetworkSpec::new("pix2pix-unet-generator", NetworkRole::Generator, vec![3, 256, 256], layers)
}

/// SAGAN generator for 64×64 images (`z_dim` = 100, conv_dim = `ngf`),
/// without the self-attention blocks.
pub fn sagan_generator(ngf: usize) -> NetworkSpec {
    let relu = |c| LayerSpec::activation(Activation::Relu, c);
    let widths = [ngf * 8, ngf * 4, ngf * 2, ngf];
    let mut layers = vec![
        LayerSpec::conv_transpose(100, widths[0], 4, 1, 0),
        LayerSpec::batch_norm(widths[0]),
        relu(widths[0]),
    ];
    for pair in widths.windows(2) {
        layers.push(LayerSpec::conv_transpose(pair[0], pair[1], 4, 2, 1));
        layers.push(LayerSpec::batch_norm(pair[1]));
        layers.push(relu(pair[1]));
    }
    layers.push(LayerSpec::conv_transpose(ngf, 3, 4, 2, 1));
    layers.push(LayerSpec::activation(Activation::Tanh, 3));
    NetworkSpec::new("sagan-generator", NetworkRole::Generator, vec![100, 1, 1], layers)
}

/// SRResNet generator (SRGAN, 4× upscaling): 9×9 head, 16 residual blocks,
/// two pixel-shuffle stages and a 9×9 tail. PReLU is modelled as LeakyReLU.
/// Declared for a 24×24 low-resolution input (96×96 crops downsampled 4×).
pub fn srgan_generator(ngf: usize) -> NetworkSpec {
    let act = |c| LayerSpec::activation(Activation::LeakyRelu, c);
    let mut layers = vec![LayerSpec::conv(3, ngf, 9, 1, 4), act(ngf).tap("head")];
    let mut prev = "head".to_string();
    for b in 1..=16 {
        let name = format!("res{b}");
        layers.extend([
            LayerSpec::conv(ngf, ngf, 3, 1, 1),
            LayerSpec::batch_norm(ngf),
            act(ngf),
            LayerSpec::conv(ngf, ngf, 3, 1, 1),
            LayerSpec::batch_norm(ngf).skip(&prev, SkipMode::Add).tap(&name),
        ]);
        prev = name;
    }
    layers.push(LayerSpec::conv(ngf, ngf, 3, 1, 1));
    layers.push(LayerSpec::batch_norm(ngf).skip("head", SkipMode::Add));
    for _ in 0..2 {
        layers.push(LayerSpec::conv(ngf, ngf * 4, 3, 1, 1));
        layers.push(LayerSpec::pixel_shuffle(ngf * 4, 2));
        layers.push(act(ngf));
    }
    layers.push(LayerSpec::conv(ngf, 3, 9, 1, 4));
    layers.push(LayerSpec::activation(Activation::Tanh, 3));
    NetworkSpec::new("srgan-generator", NetworkRole::Generator, vec![3, 24, 24], layers)
}

/// A shape-only reference generator together with the input at which its
/// published MACs figure is measured.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    pub key: &'static str,
    pub spec: NetworkSpec,
    pub measure_input: Vec<usize>,
    pub published_macs: f64,
}

/// Reference generators at the published teacher widths.
///
/// SRGAN's published count corresponds to a 256×256 low-resolution input,
/// not the 24×24 training input.
pub fn reference_models() -> Vec<ReferenceModel> {
    vec![
        ReferenceModel {
            key: "cyclegan",
            spec: cyclegan_resnet_generator(64),
            measure_input: vec![3, 256, 256],
            published_macs: 56.80e9,
        },
        ReferenceModel {
            key: "pix2pix",
            spec: pix2pix_unet_generator(64),
            measure_input: vec![3, 256, 256],
            published_macs: 18.6e9,
        },
        ReferenceModel {
            key: "sagan",
            spec: sagan_generator(64),
            measure_input: vec![100, 1, 1],
            published_macs: 23.45e6,
        },
        ReferenceModel {
            key: "srgan",
            spec: srgan_generator(64),
            measure_input: vec![3, 256, 256],
            published_macs: 145.88e9,
        },
    ]
}
