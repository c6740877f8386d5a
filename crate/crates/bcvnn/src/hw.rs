//! Analytical latency and resource model for two hardware mapping schemes.
//!
//! Units are abstract. One latency unit is one engine pass over one element of
//! real-valued work, so a linear layer whose single real sub-product takes `L`
//! multiply-accumulates has base latency `L`.
//!
//! | class | layers              | latency-opt        | resource-opt        |
//! |-------|---------------------|--------------------|---------------------|
//! | 1     | conv2d, dense       | 4 engines, `L`     | 2 engines, `2L`     |
//! | 2     | pool, activation    | 2 engines, `L`     | 1 engine, `2L`      |
//! | 3     | dropout             | 2 switched engines | 2 switched engines  |
//!
//! A dropout layer always instantiates two engines behind switches; one or two
//! of them are active depending on its part mode. Its latency is the number of
//! elements touched per part under latency-opt and that number times the
//! active part count under resource-opt, where parts stream sequentially.
//! Layers run one after another, so network totals are plain sums.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{LayerSpec, PartMode};
use crate::network::NetworkSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MappingScheme {
    LatencyOpt,
    ResourceOpt,
}

impl MappingScheme {
    pub const ALL: [MappingScheme; 2] = [MappingScheme::LatencyOpt, MappingScheme::ResourceOpt];
}

impl fmt::Display for MappingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MappingScheme::LatencyOpt => "latency-opt",
            MappingScheme::ResourceOpt => "resource-opt",
        })
    }
}

impl FromStr for MappingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latency-opt" => Ok(MappingScheme::LatencyOpt),
            "resource-opt" => Ok(MappingScheme::ResourceOpt),
            _ => Err(Error::InvalidArgument(format!("unknown mapping scheme {s:?}"))),
        }
    }
}

/// Operational class of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerClass {
    /// Convolution and dense layers (four real sub-products).
    Class1,
    /// Pooling and activation layers (one real function per part).
    Class2,
    /// Bayesian dropout layers.
    Class3,
}

impl fmt::Display for LayerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerClass::Class1 => "class1",
            LayerClass::Class2 => "class2",
            LayerClass::Class3 => "class3",
        })
    }
}

impl FromStr for LayerClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class1" => Ok(LayerClass::Class1),
            "class2" => Ok(LayerClass::Class2),
            "class3" => Ok(LayerClass::Class3),
            _ => Err(Error::Format(format!("unknown layer class {s:?}"))),
        }
    }
}

pub fn classify_layer(layer: &LayerSpec) -> LayerClass {
    match layer {
        LayerSpec::ComplexConv2D { .. } | LayerSpec::ComplexDense { .. } => LayerClass::Class1,
        LayerSpec::ComplexPool { .. } | LayerSpec::ComplexActivation { .. } => LayerClass::Class2,
        LayerSpec::BernoulliDropout { .. } => LayerClass::Class3,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostEstimate {
    pub latency_units: f64,
    pub engine_count: u64,
    /// Real multiply-accumulates over all four sub-products.
    pub mac_ops: u64,
    /// Dropout engines switched on.
    pub dropout_engines: u64,
    /// Weight storage in real scalars (both parts).
    pub memory_words: u64,
}

impl std::ops::AddAssign for CostEstimate {
    fn add_assign(&mut self, o: Self) {
        self.latency_units += o.latency_units;
        self.engine_count += o.engine_count;
        self.mac_ops += o.mac_ops;
        self.dropout_engines += o.dropout_engines;
        self.memory_words += o.memory_words;
    }
}

/// Cost of one layer for a per-sample input shape.
pub fn estimate_layer(layer: &LayerSpec, input_shape: &[usize], scheme: MappingScheme) -> Result<CostEstimate> {
    let out_shape = layer
        .output_shape(input_shape)
        .map_err(|e| Error::Shape(format!("cannot resolve {} layer shape: {e}", layer.name())))?;
    let in_elems: u64 = input_shape.iter().product::<usize>() as u64;
    let out_elems: u64 = out_shape.iter().product::<usize>() as u64;
    let parallel = scheme == MappingScheme::LatencyOpt;
    Ok(match classify_layer(layer) {
        LayerClass::Class1 => {
            let (kshape, bshape) = layer.weight_shapes(input_shape)?.expect("class 1 layers have weights");
            let fan_in: u64 = kshape[1..].iter().product::<usize>() as u64;
            let base = out_elems * fan_in;
            let params = (kshape.iter().product::<usize>() + bshape.iter().product::<usize>()) as u64;
            CostEstimate {
                latency_units: if parallel { base as f64 } else { 2.0 * base as f64 },
                engine_count: if parallel { 4 } else { 2 },
                mac_ops: 4 * base,
                dropout_engines: 0,
                memory_words: 2 * params,
            }
        }
        LayerClass::Class2 => CostEstimate {
            latency_units: if parallel { in_elems as f64 } else { 2.0 * in_elems as f64 },
            engine_count: if parallel { 2 } else { 1 },
            ..CostEstimate::default()
        },
        LayerClass::Class3 => {
            let LayerSpec::BernoulliDropout { part_mode, .. } = layer else { unreachable!() };
            let active = part_mode.mask_count() as u64;
            CostEstimate {
                latency_units: if parallel { in_elems as f64 } else { (active * in_elems) as f64 },
                engine_count: 2,
                dropout_engines: active,
                ..CostEstimate::default()
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerCost {
    pub index: usize,
    pub class: LayerClass,
    pub cost: CostEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkCost {
    pub scheme: MappingScheme,
    pub layers: Vec<LayerCost>,
    pub total: CostEstimate,
}

/// Sums per-layer costs for `spec` with its dropout layers set to `modes`.
pub fn estimate_network(spec: &NetworkSpec, modes: &[PartMode], scheme: MappingScheme) -> Result<NetworkCost> {
    let spec = spec.with_part_modes(modes)?;
    let shapes = spec.layer_shapes()?;
    let mut layers = Vec::with_capacity(spec.layers().len());
    let mut total = CostEstimate::default();
    for (index, (layer, in_shape)) in spec.layers().iter().zip(&shapes).enumerate() {
        let cost = estimate_layer(layer, in_shape, scheme)?;
        total += cost;
        layers.push(LayerCost { index, class: classify_layer(layer), cost });
    }
    Ok(NetworkCost { scheme, layers, total })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeComparison {
    pub latency_opt: NetworkCost,
    pub resource_opt: NetworkCost,
    /// resource-opt latency / latency-opt latency.
    pub latency_ratio: f64,
    /// resource-opt engines / latency-opt engines.
    pub engine_ratio: f64,
}

pub fn compare_schemes(spec: &NetworkSpec, modes: &[PartMode]) -> Result<SchemeComparison> {
    let latency_opt = estimate_network(spec, modes, MappingScheme::LatencyOpt)?;
    let resource_opt = estimate_network(spec, modes, MappingScheme::ResourceOpt)?;
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    Ok(SchemeComparison {
        latency_ratio: ratio(resource_opt.total.latency_units, latency_opt.total.latency_units),
        engine_ratio: ratio(resource_opt.total.engine_count as f64, latency_opt.total.engine_count as f64),
        latency_opt,
        resource_opt,
    })
}

const COST_HEADER: [&str; 8] = [
    "layer_index",
    "class",
    "scheme",
    "latency_units",
    "engines",
    "mac_ops",
    "memory_words",
    "dropout_engines",
];

fn cost_row(index: &str, class: &str, scheme: MappingScheme, c: &CostEstimate) -> [String; 8] {
    [
        index.to_string(),
        class.to_string(),
        scheme.to_string(),
        c.latency_units.to_string(),
        c.engine_count.to_string(),
        c.mac_ops.to_string(),
        c.memory_words.to_string(),
        c.dropout_engines.to_string(),
    ]
}

/// Per-layer rows followed by a `total` row for each report, under one header.
pub fn write_cost_csv<W: Write>(reports: &[&NetworkCost], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COST_HEADER)?;
    for r in reports {
        for l in &r.layers {
            w.write_record(cost_row(&l.index.to_string(), &l.class.to_string(), r.scheme, &l.cost))?;
        }
        w.write_record(cost_row("total", "", r.scheme, &r.total))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses reports written by [`write_cost_csv`].
pub fn read_cost_csv<R: Read>(input: R) -> Result<Vec<NetworkCost>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != COST_HEADER {
        return Err(Error::Format(format!("unexpected cost report header {header:?}")));
    }
    let mut reports = Vec::new();
    let mut layers = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<u64> {
            row[i].parse().map_err(|_| Error::Format(format!("bad integer {:?}", &row[i])))
        };
        let cost = CostEstimate {
            latency_units: row[3].parse().map_err(|_| Error::Format(format!("bad latency {:?}", &row[3])))?,
            engine_count: num(4)?,
            mac_ops: num(5)?,
            memory_words: num(6)?,
            dropout_engines: num(7)?,
        };
        let scheme: MappingScheme = row[2].parse()?;
        if &row[0] == "total" {
            reports.push(NetworkCost { scheme, layers: std::mem::take(&mut layers), total: cost });
        } else {
            let index = row[0].parse().map_err(|_| Error::Format(format!("bad index {:?}", &row[0])))?;
            layers.push(LayerCost { index, class: row[1].parse()?, cost });
        }
    }
    if !layers.is_empty() {
        return Err(Error::Format("cost report ends without a total row".into()));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Activation, PoolReduction};

    fn dense(out: usize) -> LayerSpec {
        LayerSpec::ComplexDense { out_features: out }
    }

    #[test]
    fn classes() {
        assert_eq!(
            classify_layer(&LayerSpec::ComplexConv2D { out_channels: 1, kernel: [3, 3], stride: 1 }),
            LayerClass::Class1
        );
        assert_eq!(classify_layer(&dense(3)), LayerClass::Class1);
        assert_eq!(
            classify_layer(&LayerSpec::ComplexPool { window: 2, reduction: PoolReduction::Max }),
            LayerClass::Class2
        );
        assert_eq!(
            classify_layer(&LayerSpec::ComplexActivation { activation: Activation::CRelu }),
            LayerClass::Class2
        );
        assert_eq!(
            classify_layer(&LayerSpec::BernoulliDropout { keep_rate: 0.5, part_mode: PartMode::Both }),
            LayerClass::Class3
        );
    }

    #[test]
    fn dense_work_is_conserved() {
        for scheme in MappingScheme::ALL {
            let c = estimate_layer(&dense(128), &[128], scheme).unwrap();
            assert_eq!(c.mac_ops, 4 * 128 * 128);
        }
        let lat = estimate_layer(&dense(128), &[128], MappingScheme::LatencyOpt).unwrap();
        let res = estimate_layer(&dense(128), &[128], MappingScheme::ResourceOpt).unwrap();
        assert_eq!(res.latency_units, 2.0 * lat.latency_units);
        assert_eq!((lat.engine_count, res.engine_count), (4, 2));
        assert_eq!(lat.memory_words, 2 * (128 * 128 + 128));
    }

    #[test]
    fn dropout_switches() {
        let both = LayerSpec::BernoulliDropout { keep_rate: 0.5, part_mode: PartMode::Both };
        let real = LayerSpec::BernoulliDropout { keep_rate: 0.5, part_mode: PartMode::Real };
        let b = estimate_layer(&both, &[4, 3, 3], MappingScheme::LatencyOpt).unwrap();
        let r = estimate_layer(&real, &[4, 3, 3], MappingScheme::LatencyOpt).unwrap();
        assert_eq!((b.dropout_engines, r.dropout_engines), (2, 1));
        assert_eq!(b.engine_count, r.engine_count);
    }

    #[test]
    fn unresolved_shapes_fail() {
        let conv = LayerSpec::ComplexConv2D { out_channels: 1, kernel: [3, 3], stride: 1 };
        assert!(estimate_layer(&conv, &[9], MappingScheme::LatencyOpt).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let spec = NetworkSpec::new(
            vec![1, 6, 6],
            2,
            vec![
                LayerSpec::ComplexConv2D { out_channels: 2, kernel: [3, 3], stride: 1 },
                LayerSpec::BernoulliDropout { keep_rate: 0.5, part_mode: PartMode::Both },
                LayerSpec::ComplexPool { window: 2, reduction: PoolReduction::Avg },
                LayerSpec::ComplexDense { out_features: 2 },
            ],
        )
        .unwrap();
        let cmp = compare_schemes(&spec, &[PartMode::Imag]).unwrap();
        let mut buf = Vec::new();
        write_cost_csv(&[&cmp.latency_opt, &cmp.resource_opt], &mut buf).unwrap();
        let back = read_cost_csv(&buf[..]).unwrap();
        assert_eq!(back, vec![cmp.latency_opt.clone(), cmp.resource_opt.clone()]);
        assert!(cmp.latency_ratio > 1.0);
        assert!(cmp.engine_ratio < 1.0);
    }
}
