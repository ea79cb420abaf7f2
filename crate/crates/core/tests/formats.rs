//! Binary tensor files, checkpoints and CSV inputs.

mod common;

use common::random_tensor;
use sleepgmu::data::ChannelSpec;
use sleepgmu::formats::{decode_checkpoint, decode_tensor, encode_checkpoint, encode_tensor, parse_labels, parse_signals};
use sleepgmu::model::{ArchConfig, FusionMode, Model, ModelConfig};
use sleepgmu::{EpochRecord, Error, Stage};

fn model(fusion: FusionMode) -> Model {
    let channels = vec![ChannelSpec { name: "a".into(), t: 3, f: 4 }, ChannelSpec { name: "b".into(), t: 2, f: 6 }];
    let arch = ArchConfig { embed_dim: 8, heads: 2, ff_hidden: 8, blocks: 2, gmu_shared_dim: 4, classifier_hidden: 5, fusion, ..ArchConfig::default() };
    Model::new(ModelConfig::new(channels, arch).unwrap(), &mut common::rng(3)).unwrap()
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    for fusion in [FusionMode::Gmu, FusionMode::Concat] {
        let m = model(fusion);
        let bytes = encode_checkpoint(&m, 42, 1234).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!((back.seed, back.step), (42, 1234));
        assert_eq!(back.model, m);
        let bits = |m: &Model| m.params().flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.model), bits(&m));
        assert_eq!(encode_checkpoint(&back.model, 42, 1234).unwrap(), bytes);

        let mut r = common::rng(4);
        let recs: Vec<EpochRecord> = (0..4)
            .map(|i| EpochRecord {
                channels: m.config().channels.iter().map(|c| (c.name.clone(), random_tensor(&[c.t, c.f], &mut r))).collect(),
                label: Stage::ALL[i],
                epoch_index: i,
            })
            .collect();
        let refs: Vec<&EpochRecord> = recs.iter().collect();
        assert_eq!(m.infer(&refs, 2).unwrap(), back.model.infer(&refs, 2).unwrap());
    }
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let bytes = encode_checkpoint(&model(FusionMode::Gmu), 1, 2).unwrap();
    let is_format = |b: &[u8]| matches!(decode_checkpoint(b), Err(Error::Format { .. }) | Err(Error::Json(_)) | Err(Error::Config(_)) | Err(Error::Shape { .. }));
    assert!(is_format(&bytes[..bytes.len() - 1]));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(is_format(&extra));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(is_format(&magic));
    let mut version = bytes.clone();
    version[4] = 9;
    assert!(is_format(&version));
    let mut header_len = bytes.clone();
    header_len[5..9].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(is_format(&header_len));
    for cut in [0, 3, 8, 20] {
        assert!(is_format(&bytes[..cut]));
    }
}

#[test]
fn tensor_file_round_trip() {
    let t = random_tensor(&[3, 1, 4], &mut common::rng(5));
    let bytes = encode_tensor(&t);
    assert_eq!(bytes.len(), 4 + 1 + 4 + 3 * 4 + 12 * 8);
    assert_eq!(decode_tensor(&bytes).unwrap(), t);
}

#[test]
fn csv_inputs() {
    let signals = "timestamp,channel,value\n0.0,eeg,1.5\n0.01,eeg,\n0.0,eog,-2\n";
    let table = parse_signals(signals.as_bytes(), "s.csv").unwrap();
    assert_eq!(table.channels["eeg"], vec![(0.0, Some(1.5)), (0.01, None)]);
    assert_eq!(table.channels["eog"], vec![(0.0, Some(-2.0))]);
    let bad = "timestamp,channel,value\n0.0,eeg,1\nabc,eeg,2\n";
    match parse_signals(bad.as_bytes(), "s.csv") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let labels = parse_labels("epoch_index,stage\n1,S4\n0,W\n".as_bytes(), "l.csv").unwrap();
    assert_eq!(labels.iter().map(|l| l.epoch_index).collect::<Vec<_>>(), vec![0, 1]);
    assert!(parse_labels("epoch_index,stage\n0,Q\n".as_bytes(), "l.csv").is_err());
    assert!(parse_labels("epoch_index,stage\n0,W\n0,W\n".as_bytes(), "l.csv").is_err());
}
