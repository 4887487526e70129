//! Built-in benchmark architectures, adapted for 32x32 CIFAR inputs.

use thiserror::Error;

use crate::arch::{GraphBuilder, GroupReason, InputShape, NetworkGraph};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown architecture `{0}` (try `zoo list`)")]
pub struct UnknownArch(pub String);

pub struct ZooEntry {
    pub name: &'static str,
    pub builder: fn() -> NetworkGraph,
    pub notes: &'static str,
}

pub const ENTRIES: &[ZooEntry] = &[
    ZooEntry {
        name: "fig3_toy",
        builder: fig3_toy,
        notes: "Three unpadded 3x3 convs with uneven filter counts (32, 64, 16) on a 3x32x32 \
                input, stride 1, so spatial extents shrink 32 -> 30 -> 28 -> 26.",
    },
    ZooEntry {
        name: "vgg16_cifar10",
        builder: vgg16_cifar10,
        notes: "Standard 13-conv VGG-16 (3x3, padding 1, ReLU) with five 2x2 max pools on \
                3x32x32, flatten of 512x1x1, dense 4096/4096/10. No biases, no batchnorm.",
    },
    ZooEntry {
        name: "alexnet_cifar100",
        builder: alexnet_cifar100,
        notes: "Five convs 64/192/384/256/256: conv1 11x11 stride 2 padding 5 (32 -> 16), \
                2x2 pool, conv2 5x5 padding 2, 2x2 pool, three 3x3 convs at 4x4, flatten \
                256x4x4 = 4096, dense 4096/4096/100. Totals are about 36.4M params and \
                1.88e8 FLOPs (x2), i.e. +7% and -18% against the reported 33.95M and 2.29e8; \
                no standard CIFAR variant matches both.",
    },
    ZooEntry {
        name: "resnet50_cifar100",
        builder: resnet50_cifar100,
        notes: "Bottleneck ResNet-50 (3/4/6/3 blocks, widths 64/128/256/512, expansion 4) with a \
                3x3 stride-1 stem and no stem pool for 32x32 inputs; projection shortcuts on \
                the first block of each stage; batchnorm after every conv; global average pool \
                and dense 2048 -> 100. Every residual stage is one channel group and, having \
                identity skips, is protected: only the first two convs of each bottleneck are \
                prunable.",
    },
    ZooEntry {
        name: "mobilenetv2_cifar10",
        builder: mobilenetv2_cifar10,
        notes: "MobileNetV2 with 17 inverted-residual blocks (t,c,n,s) = (1,16,1,1) \
                (6,24,2,1) (6,32,3,2) (6,64,4,2) (6,96,3,1) (6,160,3,2) (6,320,1,1); the first \
                two stages use stride 1 for 32x32 inputs; 3x3 stride-1 stem of 32, final 1x1 \
                conv of 1280, global average pool, dense 1280 -> 10. Expansion convs are tied \
                to their depthwise conv; residual stages are protected.",
    },
];

pub fn entry(name: &str) -> Option<&'static ZooEntry> {
    ENTRIES.iter().find(|e| e.name == name)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    ENTRIES.iter().map(|e| e.name)
}

/// Builds a zoo architecture, validated and shape-resolved.
pub fn builtin_arch(name: &str) -> Result<NetworkGraph, UnknownArch> {
    entry(name).map(|e| (e.builder)()).ok_or_else(|| UnknownArch(name.to_string()))
}

fn finish(b: GraphBuilder) -> NetworkGraph {
    b.build().expect("zoo architectures are well formed")
}

pub fn fig3_toy() -> NetworkGraph {
    let mut b = GraphBuilder::new(InputShape::new(3, 32, 32));
    let x = b.input("input");
    let c1 = b.conv(&x, "conv1", 32, 3, 1, 0);
    let c2 = b.conv(&c1, "conv2", 64, 3, 1, 0);
    let c3 = b.conv(&c2, "conv3", 16, 3, 1, 0);
    b.output(&c3, "output");
    finish(b)
}

pub fn vgg16_cifar10() -> NetworkGraph {
    const STAGES: [&[usize]; 5] = [&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];
    let mut b = GraphBuilder::new(InputShape::new(3, 32, 32));
    let mut x = b.input("input");
    let mut n = 0;
    for (s, widths) in STAGES.iter().enumerate() {
        for &w in widths.iter() {
            n += 1;
            let c = b.conv(&x, &format!("conv{n}"), w, 3, 1, 1);
            x = b.activation(&c, &format!("relu{n}"));
        }
        x = b.pool_max(&x, &format!("pool{}", s + 1), 2, 2);
    }
    x = b.flatten(&x, "flatten");
    let f1 = b.dense(&x, "fc1", 4096);
    let r1 = b.activation(&f1, "fc1_relu");
    let f2 = b.dense(&r1, "fc2", 4096);
    let r2 = b.activation(&f2, "fc2_relu");
    let f3 = b.dense(&r2, "fc3", 10);
    b.output(&f3, "output");
    finish(b)
}

pub fn alexnet_cifar100() -> NetworkGraph {
    let mut b = GraphBuilder::new(InputShape::new(3, 32, 32));
    let x = b.input("input");
    let c1 = b.conv(&x, "conv1", 64, 11, 2, 5);
    let r1 = b.activation(&c1, "relu1");
    let p1 = b.pool_max(&r1, "pool1", 2, 2);
    let c2 = b.conv(&p1, "conv2", 192, 5, 1, 2);
    let r2 = b.activation(&c2, "relu2");
    let p2 = b.pool_max(&r2, "pool2", 2, 2);
    let c3 = b.conv(&p2, "conv3", 384, 3, 1, 1);
    let r3 = b.activation(&c3, "relu3");
    let c4 = b.conv(&r3, "conv4", 256, 3, 1, 1);
    let r4 = b.activation(&c4, "relu4");
    let c5 = b.conv(&r4, "conv5", 256, 3, 1, 1);
    let r5 = b.activation(&c5, "relu5");
    let f = b.flatten(&r5, "flatten");
    let f1 = b.dense(&f, "fc1", 4096);
    let a1 = b.activation(&f1, "fc1_relu");
    let f2 = b.dense(&a1, "fc2", 4096);
    let a2 = b.activation(&f2, "fc2_relu");
    let f3 = b.dense(&a2, "fc3", 100);
    b.output(&f3, "output");
    finish(b)
}

/// conv -> batchnorm, returning (conv id, batchnorm id).
fn conv_bn(b: &mut GraphBuilder, from: &str, id: &str, filters: usize, k: usize, stride: usize) -> (String, String) {
    let c = b.conv(from, id, filters, k, stride, k / 2);
    let n = b.batchnorm(&c, &format!("{id}_bn"));
    (c, n)
}

pub fn resnet50_cifar100() -> NetworkGraph {
    const STAGES: [(usize, usize, usize); 4] = [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)];
    let mut b = GraphBuilder::new(InputShape::new(3, 32, 32));
    let x = b.input("input");
    let (_, bn) = conv_bn(&mut b, &x, "stem", 64, 3, 1);
    let mut x = b.activation(&bn, "stem_relu");

    for (si, &(width, blocks, stride)) in STAGES.iter().enumerate() {
        let out = width * 4;
        let mut members = Vec::new();
        for bi in 0..blocks {
            let p = format!("s{}b{}", si + 1, bi + 1);
            let s = if bi == 0 { stride } else { 1 };
            let (_, n1) = conv_bn(&mut b, &x, &format!("{p}_conv1"), width, 1, 1);
            let a1 = b.activation(&n1, &format!("{p}_relu1"));
            let (_, n2) = conv_bn(&mut b, &a1, &format!("{p}_conv2"), width, 3, s);
            let a2 = b.activation(&n2, &format!("{p}_relu2"));
            let (c3, n3) = conv_bn(&mut b, &a2, &format!("{p}_conv3"), out, 1, 1);
            members.push(c3);
            let shortcut = if bi == 0 {
                let (proj, pn) = conv_bn(&mut b, &x, &format!("{p}_proj"), out, 1, s);
                members.push(proj);
                pn
            } else {
                x.clone()
            };
            let sum = b.add(&[&n3, &shortcut], &format!("{p}_add"));
            members.push(sum.clone());
            x = b.activation(&sum, &format!("{p}_relu3"));
        }
        for m in members.iter().filter(|m| !m.ends_with("_add")) {
            b.protect(m);
        }
        b.group(GroupReason::ResidualAdd, &members);
    }

    let g = b.global_avg_pool(&x, "gap");
    let fc = b.dense(&g, "fc", 100);
    b.output(&fc, "output");
    finish(b)
}

pub fn mobilenetv2_cifar10() -> NetworkGraph {
    const SETTINGS: [(usize, usize, usize, usize); 7] =
        [(1, 16, 1, 1), (6, 24, 2, 1), (6, 32, 3, 2), (6, 64, 4, 2), (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)];
    let mut b = GraphBuilder::new(InputShape::new(3, 32, 32));
    let x = b.input("input");
    let (stem, bn) = conv_bn(&mut b, &x, "stem", 32, 3, 1);
    let mut x = b.activation(&bn, "stem_relu");
    // conv whose filters currently feed `x` channel-for-channel
    let mut source = stem;
    let mut channels = 32;
    let mut block = 0;

    for &(t, c, n, s) in SETTINGS.iter() {
        let mut members = Vec::new();
        for i in 0..n {
            block += 1;
            let p = format!("b{block}");
            let stride = if i == 0 { s } else { 1 };
            let block_in = x.clone();
            let mut h = x.clone();
            let mut tie_source = source.clone();
            if t != 1 {
                let (e, en) = conv_bn(&mut b, &h, &format!("{p}_expand"), channels * t, 1, 1);
                h = b.activation(&en, &format!("{p}_expand_relu"));
                tie_source = e;
            }
            let dw = b.depthwise(&h, &format!("{p}_dw"), 3, stride, 1);
            b.group(GroupReason::DepthwiseTie, &[tie_source, dw.clone()]);
            let dn = b.batchnorm(&dw, &format!("{p}_dw_bn"));
            let da = b.activation(&dn, &format!("{p}_dw_relu"));
            let (proj, pn) = conv_bn(&mut b, &da, &format!("{p}_project"), c, 1, 1);
            if stride == 1 && channels == c {
                if members.is_empty() {
                    members.push(source.clone());
                }
                let sum = b.add(&[&pn, &block_in], &format!("{p}_add"));
                members.push(proj.clone());
                members.push(sum.clone());
                x = sum;
            } else {
                x = pn;
            }
            source = proj;
            channels = c;
        }
        if !members.is_empty() {
            for m in members.iter().filter(|m| !m.ends_with("_add")) {
                b.protect(m);
            }
            b.group(GroupReason::ResidualAdd, &members);
        }
    }

    let (_, hn) = conv_bn(&mut b, &x, "head", 1280, 1, 1);
    let ha = b.activation(&hn, "head_relu");
    let g = b.global_avg_pool(&ha, "gap");
    let fc = b.dense(&g, "fc", 10);
    b.output(&fc, "output");
    finish(b)
}
