use std::ffi::{CStr, CString};
use std::ptr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ubnn::model::format;
use ubnn::rf::{self, FeatureQuantizer, Forest};
use ubnn::synth;
use ubnn_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ubn_last_error()) }.to_string_lossy().into_owned()
}

fn walk_min_bytes(seed: u64) -> (ubnn::model::Network, Vec<u8>) {
    let net = synth::walk_min(&mut ChaCha8Rng::seed_from_u64(seed));
    let bytes = format::to_bytes(&net).unwrap();
    (net, bytes)
}

#[test]
fn network_round_trip_through_handle() {
    let (net, bytes) = walk_min_bytes(1);
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(ubn_network_from_bytes(bytes.as_ptr(), bytes.len(), &mut h), UbnStatus::Ok);
        let (mut t, mut c) = (0, 0);
        assert_eq!(ubn_network_input_shape(h, &mut t, &mut c), UbnStatus::Ok);
        assert_eq!((t, c), (32, 3));
        assert_eq!(ubn_network_num_classes(h), 2);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x = synth::random_input(&mut rng, &net);
            let want = net.classify(&x).unwrap();
            let mut class = usize::MAX;
            let mut scores = [0i64; 2];
            let s = ubn_network_predict(h, x.as_ptr(), x.len(), &mut class, scores.as_mut_ptr(), 2);
            assert_eq!(s, UbnStatus::Ok);
            assert_eq!(class, want.class);
            assert_eq!(scores.to_vec(), want.scores);
            // scores are optional
            let s = ubn_network_predict(h, x.as_ptr(), x.len(), &mut class, ptr::null_mut(), 0);
            assert_eq!(s, UbnStatus::Ok);
        }
        ubn_network_free(h);
    }
}

#[test]
fn network_errors() {
    let (_, bytes) = walk_min_bytes(3);
    let mut h = ptr::null_mut();
    unsafe {
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert_eq!(ubn_network_from_bytes(bad.as_ptr(), bad.len(), &mut h), UbnStatus::Format);
        assert!(h.is_null());
        assert!(last_error().contains("code 1"), "{}", last_error());
        assert_eq!(ubn_network_from_bytes(bytes.as_ptr(), 10, &mut h), UbnStatus::Format);
        assert!(last_error().contains("code 3"));
        assert_eq!(ubn_network_from_bytes(ptr::null(), 4, &mut h), UbnStatus::NullPointer);
        assert_eq!(ubn_network_from_bytes(bytes.as_ptr(), bytes.len(), ptr::null_mut()), UbnStatus::NullPointer);

        let missing = CString::new("/nonexistent/model.ubn").unwrap();
        assert_eq!(ubn_network_load(missing.as_ptr(), &mut h), UbnStatus::Io);
        assert_eq!(ubn_network_load(ptr::null(), &mut h), UbnStatus::NullPointer);

        assert_eq!(ubn_network_from_bytes(bytes.as_ptr(), bytes.len(), &mut h), UbnStatus::Ok);
        let x = [0i8; 95];
        let mut class = 0;
        assert_eq!(ubn_network_predict(h, x.as_ptr(), x.len(), &mut class, ptr::null_mut(), 0), UbnStatus::Shape);
        let x = [0i8; 96];
        let mut scores = [0i64; 3];
        assert_eq!(ubn_network_predict(h, x.as_ptr(), x.len(), &mut class, scores.as_mut_ptr(), 3), UbnStatus::Shape);
        assert_eq!(ubn_network_predict(ptr::null(), x.as_ptr(), 96, &mut class, ptr::null_mut(), 0), UbnStatus::NullPointer);
        assert_eq!(ubn_network_num_classes(ptr::null()), 0);
        ubn_network_free(h);
        ubn_network_free(ptr::null_mut());
    }
}

#[test]
fn network_load_from_file() {
    let (net, bytes) = walk_min_bytes(4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("walk.ubn");
    std::fs::write(&path, &bytes).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(ubn_network_load(cpath.as_ptr(), &mut h), UbnStatus::Ok);
        let x = [1i8; 96];
        let mut class = 9;
        assert_eq!(ubn_network_predict(h, x.as_ptr(), 96, &mut class, ptr::null_mut(), 0), UbnStatus::Ok);
        assert_eq!(class, net.classify(&x).unwrap().class);
        ubn_network_free(h);
    }
}

#[test]
fn forest_through_handle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trees = synth::random_trees(&mut rng, 10, 6, rf::N_FEATURES, 3);
    let scale = (0..rf::N_FEATURES).map(|_| rng.gen_range(0.01f32..1.0)).collect();
    let zero = (0..rf::N_FEATURES).map(|_| rng.gen_range(-20f32..20.0)).collect();
    let forest = Forest::from_trees(&trees, 3, rf::N_FEATURES, FeatureQuantizer::new(scale, zero).unwrap()).unwrap();
    let bytes = rf::format::to_bytes(&forest).unwrap();
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(ubn_forest_from_bytes(bytes.as_ptr(), bytes.len(), &mut h), UbnStatus::Ok);
        assert_eq!(ubn_forest_num_features(h), 21);
        assert_eq!(ubn_forest_num_classes(h), 3);
        for _ in 0..100 {
            let x: Vec<i8> = (0..21).map(|_| rng.gen()).collect();
            let mut class = usize::MAX;
            assert_eq!(ubn_forest_predict(h, x.as_ptr(), x.len(), &mut class), UbnStatus::Ok);
            assert_eq!(class, forest.predict(&x).unwrap());

            let w: Vec<i32> = (0..96).map(|_| rng.gen_range(-1000..1000)).collect();
            assert_eq!(ubn_forest_predict_window(h, w.as_ptr(), w.len(), &mut class), UbnStatus::Ok);
            assert_eq!(class, forest.classify_window(&w).unwrap());
        }
        let mut class = 0;
        let x = [0i8; 20];
        assert_eq!(ubn_forest_predict(h, x.as_ptr(), x.len(), &mut class), UbnStatus::Shape);
        let w = [0i32; 95];
        assert_eq!(ubn_forest_predict_window(h, w.as_ptr(), w.len(), &mut class), UbnStatus::Shape);
        ubn_forest_free(h);

        let mut bad = bytes.clone();
        bad.push(1);
        assert_eq!(ubn_forest_from_bytes(bad.as_ptr(), bad.len(), &mut h), UbnStatus::Format);
        assert!(last_error().contains("code 4"));
    }
}

#[test]
fn status_messages_are_distinct() {
    let all = [
        UbnStatus::Ok,
        UbnStatus::NullPointer,
        UbnStatus::Io,
        UbnStatus::Format,
        UbnStatus::Shape,
        UbnStatus::InvalidPath,
        UbnStatus::Panic,
    ];
    let msgs: Vec<String> = all
        .iter()
        .map(|&s| unsafe { CStr::from_ptr(ubn_status_message(s)) }.to_string_lossy().into_owned())
        .collect();
    for (i, a) in msgs.iter().enumerate() {
        assert!(!a.is_empty());
        assert!(msgs[i + 1..].iter().all(|b| b != a));
    }
    assert_eq!(all.iter().map(|&s| s as i32).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());
}
