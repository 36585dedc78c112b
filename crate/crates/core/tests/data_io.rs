use std::io::Write;

use proptest::prelude::*;

use spiking_jscc::data_io::{
    delayed_target_spike_train, load_dataset, preprocess_events, read_events_csv, save_dataset,
    split_dataset, target_spike_train, EventRecord, LabeledExample, PolarityMode, PreprocessConfig,
};
use spiking_jscc::error::Error;
use spiking_jscc::eval::rate_decode;
use spiking_jscc::spike::SpikeTensor;
use spiking_jscc::synthetic::{generate_synthetic_dataset, SyntheticSpec};

fn example_strategy() -> impl Strategy<Value = LabeledExample> {
    (1usize..5, 1usize..7, 0usize..4).prop_flat_map(|(d, t, label)| {
        proptest::collection::vec(0u8..2, d * t).prop_map(move |data| LabeledExample {
            label,
            spikes: SpikeTensor::from_rows(d, t, data).unwrap(),
        })
    })
}

proptest! {
    #[test]
    fn jsonl_round_trip_is_identity(data in proptest::collection::vec(example_strategy(), 0..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&path, &data).unwrap();
        prop_assert_eq!(load_dataset(&path).unwrap(), data);
    }

    #[test]
    fn target_trains_decode_to_their_label(d_v in 1usize..6, t in 1usize..30, rate in 0.05f64..=1.0, seed: usize) {
        let label = seed % d_v;
        let v = target_spike_train(label, d_v, t, rate).unwrap();
        prop_assert_eq!(rate_decode(&v, t).unwrap().predicted_class, label);
        let period = (1.0 / rate).floor() as usize;
        prop_assert_eq!(v.row_count(label), t.div_ceil(period));
        prop_assert_eq!(v.count(), v.row_count(label));
    }
}

#[test]
fn empty_dataset_file_is_an_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::File::create(&path).unwrap();
    assert!(load_dataset(&path).unwrap().is_empty());
}

#[test]
fn missing_dataset_is_an_io_error() {
    let err = load_dataset(std::path::Path::new("/nonexistent/d.jsonl")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn malformed_record_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, r#"{{"label": 0, "shape": [2, 2], "spikes": [[0, 1]]}}"#).unwrap();
    writeln!(f, r#"{{"label": 1, "shape": [2, 2], "spikes": [[2, 0]]}}"#).unwrap();
    let err = load_dataset(&path).unwrap_err();
    assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
}

#[test]
fn delayed_target_is_silent_before_the_delay() {
    let v = delayed_target_spike_train(1, 2, 8, 0.5, 3).unwrap();
    let steps: Vec<usize> = (0..8).filter(|&t| v.get(1, t) == 1).collect();
    assert_eq!(steps, vec![3, 5, 7]);
    assert_eq!(v.row_count(0), 0);
    assert_eq!(
        delayed_target_spike_train(1, 2, 8, 0.5, 0).unwrap(),
        target_spike_train(1, 2, 8, 0.5).unwrap()
    );
}

#[test]
fn csv_events_become_a_spike_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ev.csv");
    std::fs::write(
        &path,
        "timestamp_us,x,y,polarity\n0,0,0,1\n1500,1,1,0\n2500,3,3,1\n",
    )
    .unwrap();
    let events = read_events_csv(&path).unwrap();
    assert_eq!(events.len(), 3);
    assert_eq!(events[1].polarity, -1);
    let cfg = PreprocessConfig {
        sensor_width: 4,
        sensor_height: 4,
        crop: None,
        downsample: 2,
        num_steps: 3,
        window_us: 1000,
        polarity: PolarityMode::Merge,
        t0_us: 0,
    };
    let pre = preprocess_events(&events, &cfg).unwrap();
    assert!(!pre.empty);
    assert_eq!(pre.spikes.shape(), (4, 3));
    assert_eq!(pre.spikes.coordinates(), vec![(0, 0), (0, 1), (3, 2)]);

    let positive = PreprocessConfig {
        polarity: PolarityMode::PositiveOnly,
        ..cfg
    };
    assert_eq!(
        preprocess_events(&events, &positive)
            .unwrap()
            .spikes
            .coordinates(),
        vec![(0, 0), (3, 2)]
    );
}

#[test]
fn out_of_order_events_are_rejected() {
    let events = vec![
        EventRecord {
            timestamp_us: 10,
            x: 0,
            y: 0,
            polarity: 1,
        },
        EventRecord {
            timestamp_us: 5,
            x: 0,
            y: 0,
            polarity: 1,
        },
    ];
    let cfg = PreprocessConfig {
        sensor_width: 2,
        sensor_height: 2,
        crop: None,
        downsample: 1,
        num_steps: 2,
        window_us: 10,
        polarity: PolarityMode::Merge,
        t0_us: 0,
    };
    assert!(preprocess_events(&events, &cfg).is_err());
}

#[test]
fn synthetic_split_is_stratified_and_seeded() {
    let spec = SyntheticSpec {
        num_classes: 3,
        examples_per_class: 10,
        num_signals: 5,
        num_steps: 6,
        spike_density: 0.3,
        jitter: 0.1,
        seed: 2,
    };
    let data = generate_synthetic_dataset(&spec).unwrap();
    assert_eq!(data, generate_synthetic_dataset(&spec).unwrap());
    let (train, test) = split_dataset(&data, 0.8, 5).unwrap();
    assert_eq!(train.len() + test.len(), data.len());
    for c in 0..3 {
        assert_eq!(test.iter().filter(|e| e.label == c).count(), 2);
    }
    assert_eq!(split_dataset(&data, 0.8, 5).unwrap(), (train, test));
}
