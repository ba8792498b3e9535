//! Random networks, forests and inputs for property tests and verification.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bitpack::BitStream;
use crate::layers::{
    fold_batchnorm_binary, fold_batchnorm_int8, to_q16, BatchNorm, BinaryConvLayer, BinaryFcLayer, Int8ConvLayer,
};
use crate::layers::ThresholdSpec;
use crate::model::{Architecture, InputDomain, InputSpec, Layer, Network, PoolLayer, ValidationError};
use crate::oracle::{DenseTensor, Domain, RefActivation, RefLayer, ReferenceNetwork};
use crate::rf::Tree;

pub const CHANNELS: [usize; 6] = [1, 2, 4, 8, 16, 32];
pub const KERNELS: [usize; 5] = [3, 5, 7, 11, 15];
pub const MAX_TIMESTEPS: usize = 256;

/// The smallest walking-detection network: 32 x 3 int8 windows, 2 classes.
pub const WALK_MIN: &str = "Conv(2,7), Conv(2,15), Pool(4,4), FC";

pub fn walk_min_input() -> InputSpec {
    InputSpec {
        timesteps: 32,
        channels: 3,
        domain: InputDomain::Int8,
    }
}

/// A random network together with the float batchnorm parameters its
/// thresholds were folded from.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub network: Network,
    /// Same weights, with float batchnorm + sign in place of thresholds.
    pub reference: ReferenceNetwork,
}

pub fn random_bits<R: Rng>(rng: &mut R, n: usize) -> BitStream {
    BitStream::from_bits((0..n).map(|_| rng.gen::<bool>()))
}

/// Batchnorm parameters whose decision boundary usually falls inside the
/// accumulator range `[-range, range]`. Some draws put the boundary exactly
/// on an attainable value.
pub fn random_batchnorm<R: Rng>(rng: &mut R, range: f64, step: f64) -> BatchNorm {
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    if rng.gen_bool(0.2) {
        let steps = (range / step).floor() as i64;
        let mu = rng.gen_range(-steps..=steps) as f64 * step;
        return BatchNorm {
            mu,
            sigma: rng.gen_range(0.5..4.0),
            gamma: sign * rng.gen_range(0.1..3.0),
            beta: 0.0,
        };
    }
    BatchNorm {
        mu: rng.gen_range(-range..=range) * 0.6,
        sigma: rng.gen_range(0.05..8.0),
        gamma: sign * rng.gen_range(0.05..3.0),
        beta: rng.gen_range(-2.0..2.0),
    }
}

fn conv_params<R: Rng>(rng: &mut R, c_in: usize, c_out: usize, k: usize, int8: bool) -> (Vec<BitStream>, Vec<BatchNorm>) {
    let n = k * c_in;
    let filters = (0..c_out).map(|_| random_bits(rng, n)).collect();
    let (range, step) = if int8 {
        (64.0 * (n as f64).sqrt() * 2.0, 1.0)
    } else {
        // dot products of n bits have n's parity
        (n as f64, 2.0)
    };
    let bn = (0..c_out).map(|_| random_batchnorm(rng, range, step)).collect();
    (filters, bn)
}

/// Draws a network from the grammar: optional int8 first conv, up to four
/// binary convs each optionally followed by a pool, and an fc head.
pub fn random_network<R: Rng>(rng: &mut R) -> Synthetic {
    loop {
        if let Some(s) = try_random_network(rng) {
            return s;
        }
    }
}

fn try_random_network<R: Rng>(rng: &mut R) -> Option<Synthetic> {
    let domain = if rng.gen_bool(0.5) { InputDomain::Int8 } else { InputDomain::Binary };
    let timesteps = rng.gen_range(1..=MAX_TIMESTEPS);
    let channels = *CHANNELS.choose(rng).unwrap();
    let input = InputSpec {
        timesteps,
        channels,
        domain,
    };
    let n_convs = match domain {
        InputDomain::Int8 => rng.gen_range(1..=4),
        InputDomain::Binary => rng.gen_range(0..=4),
    };

    let mut layers = Vec::new();
    let mut bns = Vec::new();
    let (mut t, mut c) = (timesteps, channels);
    for i in 0..n_convs {
        let kernels: Vec<usize> = KERNELS.iter().copied().filter(|&k| k <= t).collect();
        let Some(&k) = kernels.choose(rng) else { break };
        let c_out = *CHANNELS.choose(rng).unwrap();
        let int8 = i == 0 && domain == InputDomain::Int8;
        let (filters, bn) = conv_params(rng, c, c_out, k, int8);
        let thresholds = bn
            .iter()
            .map(|b| if int8 { fold_batchnorm_int8(b, k, c) } else { fold_batchnorm_binary(b, k, c) })
            .collect::<Result<Vec<_>, _>>()
            .ok()?;
        t = t - k + 1;
        let pool = if t >= 2 && rng.gen_bool(0.4) {
            Some(rng.gen_range(2..=t.min(8)))
        } else {
            None
        };
        // half of the pooled convs carry the pool themselves
        let inline_pool = pool.filter(|_| rng.gen_bool(0.5));
        layers.push(if int8 {
            Layer::Int8Conv(Int8ConvLayer::from_filters(c, k, &filters, thresholds, inline_pool).ok()?)
        } else {
            Layer::BinaryConv(BinaryConvLayer::from_filters(c, k, &filters, thresholds, inline_pool).ok()?)
        });
        if let (Some(p), None) = (pool, inline_pool) {
            layers.push(Layer::Pool(PoolLayer { k: p, s: p }));
        }
        if let Some(p) = pool {
            t /= p;
        }
        c = c_out;
        bns.push(bn);
    }
    if domain == InputDomain::Int8 && bns.is_empty() {
        return None;
    }

    let n_classes = rng.gen_range(2..=8);
    let in_bits = t * c;
    let rows: Vec<BitStream> = (0..n_classes).map(|_| random_bits(rng, in_bits)).collect();
    let scale = (0..n_classes)
        .map(|_| to_q16(rng.gen_range(-4.0..4.0)))
        .collect::<Result<Vec<_>, _>>()
        .ok()?;
    let bias = (0..n_classes)
        .map(|_| to_q16(rng.gen_range(-(in_bits as f64)..=in_bits as f64).clamp(-30000.0, 30000.0)))
        .collect::<Result<Vec<_>, _>>()
        .ok()?;
    layers.push(Layer::Fc(BinaryFcLayer::from_rows(&rows, scale, bias).ok()?));

    let network = Network::new(input, layers).ok()?;
    let mut reference = ReferenceNetwork::from_network(&network);
    let mut bns = bns.into_iter();
    for layer in &mut reference.layers {
        if let RefLayer::Conv { activation, .. } = layer {
            *activation = RefActivation::BatchNorm(bns.next().expect("one batchnorm set per conv"));
        }
    }
    Some(Synthetic { network, reference })
}

/// `arch` with random weights, random thresholds inside each layer's
/// accumulator range and a random fc head.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    arch: &Architecture,
    input: InputSpec,
    n_classes: usize,
) -> Result<Network, ValidationError> {
    let net = arch.instantiate_with(input, n_classes, |_, bits, count| {
        let words = (0..count).flat_map(|_| random_bits(rng, bits).into_words()).collect();
        let th = (0..count)
            .map(|_| {
                let t = rng.gen_range(-(bits as i32)..=bits as i32);
                if rng.gen() {
                    ThresholdSpec::geq(t)
                } else {
                    ThresholdSpec::leq(t)
                }
            })
            .collect();
        (words, th)
    })?;
    let mut layers = net.layers().to_vec();
    let in_bits = net.fc().in_bits();
    let rows: Vec<BitStream> = (0..n_classes).map(|_| random_bits(rng, in_bits)).collect();
    let q = |v: f64| to_q16(v).expect("small values fit Q16.16");
    let scale = (0..n_classes).map(|_| q(rng.gen_range(-2.0..2.0))).collect();
    let bias = (0..n_classes).map(|_| q(rng.gen_range(-8.0..8.0))).collect();
    *layers.last_mut().expect("fc head") = Layer::Fc(BinaryFcLayer::from_rows(&rows, scale, bias).expect("shapes from a valid chain"));
    Network::new(input, layers)
}

/// A Walk-Min network with random parameters.
pub fn walk_min<R: Rng>(rng: &mut R) -> Network {
    let arch: Architecture = WALK_MIN.parse().expect("valid architecture");
    random_instance(rng, &arch, walk_min_input(), 2).expect("valid network")
}

/// A random time-major input window for `net`.
pub fn random_input<R: Rng>(rng: &mut R, net: &Network) -> Vec<i8> {
    let n = net.input_len();
    match net.input().domain {
        InputDomain::Int8 => (0..n).map(|_| rng.gen()).collect(),
        InputDomain::Binary => (0..n).map(|_| if rng.gen() { 1 } else { -1 }).collect(),
    }
}

/// The dense oracle view of an input window.
pub fn dense_input(net: &Network, values: &[i8]) -> DenseTensor {
    let spec = net.input();
    let domain = match spec.domain {
        InputDomain::Int8 => Domain::Int8,
        InputDomain::Binary => Domain::PmOne,
    };
    DenseTensor::new(spec.timesteps, spec.channels, values.iter().map(|&v| v as i64).collect(), domain)
        .expect("input matches the network shape")
}

/// A leaf distribution over `n_classes`, quantized so it sums to between
/// `256 - n_classes` and 255.
pub fn random_leaf<R: Rng>(rng: &mut R, n_classes: usize) -> Vec<u8> {
    let w: Vec<f64> = (0..n_classes).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| (x / total * 255.0).floor() as u8).collect()
}

/// A random tree of depth at most `max_depth`.
pub fn random_tree<R: Rng>(rng: &mut R, max_depth: usize, n_features: usize, n_classes: usize) -> Tree {
    if max_depth == 0 || rng.gen_bool(0.15) {
        return Tree::Leaf(random_leaf(rng, n_classes));
    }
    Tree::split(
        rng.gen_range(0..n_features) as u16,
        rng.gen(),
        random_tree(rng, max_depth - 1, n_features, n_classes),
        random_tree(rng, max_depth - 1, n_features, n_classes),
    )
}

/// Up to `max_trees` random trees that fit the 16-bit node index space.
pub fn random_trees<R: Rng>(rng: &mut R, max_trees: usize, max_depth: usize, n_features: usize, n_classes: usize) -> Vec<Tree> {
    let n_trees = rng.gen_range(1..=max_trees);
    let mut trees = Vec::with_capacity(n_trees);
    let mut nodes = 0;
    for _ in 0..n_trees {
        let depth = rng.gen_range(0..=max_depth);
        let tree = random_tree(rng, depth, n_features, n_classes);
        nodes += tree.n_nodes();
        if nodes > u16::MAX as usize {
            break;
        }
        trees.push(tree);
    }
    if trees.is_empty() {
        trees.push(Tree::Leaf(random_leaf(rng, n_classes)));
    }
    trees
}
