//! Checkpoint container layout, checked by parsing it by hand.

use zsdn::checkpoint::{encode, load, save, MAGIC};
use zsdn_core::{Model, NetConfig, RngSeed, Upsampling};

#[test]
fn layout_matches_description() {
    for up in Upsampling::ALL {
        let cfg = NetConfig {
            base_channels: 3,
            depth: 2,
            feature_channels: 8,
            upsampling: up,
            ..NetConfig::default()
        };
        let model = Model::init(cfg, RngSeed(3)).unwrap();
        let bytes = encode(&model);
        assert_eq!(&bytes[..5], MAGIC);
        let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[9..9 + len]).unwrap();
        assert_eq!(header["net"]["upsampling"], up.name());
        let data = &bytes[9 + len..];
        assert_eq!(data.len(), 4 * model.parameter_count());
        for (entry, p) in header["params"].as_array().unwrap().iter().zip(model.params()) {
            assert_eq!(entry["name"], p.name.as_str());
            let off = entry["offset"].as_u64().unwrap() as usize;
            let first = f32::from_le_bytes(data[4 * off..4 * off + 4].try_into().unwrap());
            assert_eq!(first.to_bits(), p.data[0].to_bits());
        }
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.zsdn");
    let model = Model::init(NetConfig::default(), RngSeed(9)).unwrap();
    save(&model, &path).unwrap();
    assert_eq!(load(&path).unwrap(), model);
    assert!(load(&dir.path().join("missing.zsdn")).is_err());
}
