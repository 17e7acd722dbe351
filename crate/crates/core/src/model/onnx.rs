//! Minimal ONNX graph writer for the networks this crate defines itself.

use prost::Message;
use tract_onnx::pb;

/// ONNX opset the writer targets.
pub const OPSET: i64 = 13;
const IR_VERSION: i64 = 7;
const FLOAT: i32 = pb::tensor_proto::DataType::Float as i32;

pub enum Attr {
    Int(i64),
    Ints(Vec<i64>),
    Float(f32),
}

fn attribute(name: &str, value: Attr) -> pb::AttributeProto {
    use pb::attribute_proto::AttributeType;
    let mut a = pb::AttributeProto { name: name.to_string(), ..Default::default() };
    match value {
        Attr::Int(i) => {
            a.r#type = AttributeType::Int as i32;
            a.i = i;
        }
        Attr::Ints(v) => {
            a.r#type = AttributeType::Ints as i32;
            a.ints = v;
        }
        Attr::Float(f) => {
            a.r#type = AttributeType::Float as i32;
            a.f = f;
        }
    }
    a
}

fn value_info(name: &str, dims: &[i64]) -> pb::ValueInfoProto {
    use pb::tensor_shape_proto::{dimension, Dimension};
    let shape = pb::TensorShapeProto {
        dim: dims
            .iter()
            .map(|&d| Dimension { value: Some(dimension::Value::DimValue(d)), ..Default::default() })
            .collect(),
    };
    pb::ValueInfoProto {
        name: name.to_string(),
        r#type: Some(pb::TypeProto {
            value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                elem_type: FLOAT,
                shape: Some(shape),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

/// Builds a single-input float graph node by node. Every node is named
/// after its (single) output tensor so probes can address either.
pub struct GraphBuilder {
    graph: pb::GraphProto,
}

impl GraphBuilder {
    pub fn new(name: &str, input: &str, input_dims: &[i64]) -> Self {
        let graph = pb::GraphProto {
            name: name.to_string(),
            input: vec![value_info(input, input_dims)],
            ..Default::default()
        };
        GraphBuilder { graph }
    }

    pub fn initializer(&mut self, name: &str, dims: &[usize], data: &[f32]) -> &mut Self {
        assert_eq!(dims.iter().product::<usize>(), data.len(), "initializer {name} shape");
        self.graph.initializer.push(pb::TensorProto {
            name: name.to_string(),
            dims: dims.iter().map(|&d| d as i64).collect(),
            data_type: FLOAT,
            raw_data: data.iter().flat_map(|v| v.to_le_bytes()).collect(),
            ..Default::default()
        });
        self
    }

    pub fn node(&mut self, op: &str, inputs: &[&str], output: &str, attrs: Vec<(&str, Attr)>) -> &mut Self {
        self.graph.node.push(pb::NodeProto {
            name: output.to_string(),
            op_type: op.to_string(),
            input: inputs.iter().map(|s| s.to_string()).collect(),
            output: vec![output.to_string()],
            attribute: attrs.into_iter().map(|(n, v)| attribute(n, v)).collect(),
            ..Default::default()
        });
        self
    }

    pub fn output(&mut self, name: &str, dims: &[i64]) -> &mut Self {
        self.graph.output.push(value_info(name, dims));
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let model = pb::ModelProto {
            ir_version: IR_VERSION,
            opset_import: vec![pb::OperatorSetIdProto { domain: String::new(), version: OPSET }],
            producer_name: "gestalt-probe".to_string(),
            producer_version: env!("CARGO_PKG_VERSION").to_string(),
            graph: Some(self.graph.clone()),
            ..Default::default()
        };
        model.encode_to_vec()
    }
}
