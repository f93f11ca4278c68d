mod common;

use std::ffi::{CStr, CString};
use std::ptr;

use common::{signal, write_detector, CHANNELS, WINDOW};
use waveletae::streaming::{VoteConfig, VoteState};
use waveletae::training::DetectorState;
use waveletae::wavelet::{dwt_level, WaveletFamily};
use waveletae_ffi::*;

fn last_error() -> String {
    let p = wae_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(wae_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn detector_predictions_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("det.wae");
    write_detector(&path);
    let state = DetectorState::load(&path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut det = ptr::null_mut();
    assert_eq!(unsafe { wae_detector_load(cpath.as_ptr(), &mut det) }, WaeStatus::Ok);
    let (mut c, mut t) = (0, 0);
    assert_eq!(unsafe { wae_detector_info(det, &mut c, &mut t) }, WaeStatus::Ok);
    assert_eq!((c, t), (CHANNELS, WINDOW));

    for offset in [0, 5, 100] {
        let x = signal(offset, WINDOW);
        let (mut label, mut score) = (9u8, f64::NAN);
        let st = unsafe { wae_detector_predict(det, x.as_ptr(), x.len(), &mut label, &mut score) };
        assert_eq!(st, WaeStatus::Ok);
        let frag = waveletae::data::MultiSeries::anonymous(CHANNELS, x, WINDOW).unwrap();
        let (l, s) = state.predict_fragment(&frag).unwrap();
        assert_eq!((label, score.to_bits()), (l, s.to_bits()));
    }

    let x = signal(0, WINDOW - 1);
    let (mut label, mut score) = (0u8, 0.0);
    let st = unsafe { wae_detector_predict(det, x.as_ptr(), x.len(), &mut label, &mut score) };
    assert_eq!(st, WaeStatus::Dimension);
    assert!(last_error().contains("expected 2 channels"));
    unsafe { wae_detector_free(det) };
}

#[test]
fn vote_stream_matches_the_library_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("det.wae");
    write_detector(&path);
    let state = DetectorState::load(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut det = ptr::null_mut();
    assert_eq!(unsafe { wae_detector_load(cpath.as_ptr(), &mut det) }, WaeStatus::Ok);

    let step = 8;
    let cfg = VoteConfig {
        window: WINDOW,
        step,
        vote_threshold: 0.5,
    };
    let mut reference = VoteState::new(cfg, CHANNELS).unwrap();
    let mut stream = ptr::null_mut();
    assert_eq!(
        unsafe { wae_vote_stream_new(WINDOW, step, 0.5, CHANNELS, &mut stream) },
        WaeStatus::Ok
    );
    let (mut finals, mut expired) = (0, 0);
    for b in 0..12 {
        let block = signal(b * step, step);
        let expect = reference.push_block(&state, &block).unwrap();
        let mut v = WaeBlockVerdict::default();
        let mut kind = WaeVerdictKind::None;
        let st = unsafe { wae_vote_stream_push(stream, det, block.as_ptr(), block.len(), &mut v, &mut kind) };
        assert_eq!(st, WaeStatus::Ok);
        match kind {
            WaeVerdictKind::Final => {
                let e = expect.finals[0];
                assert_eq!((v.block_index, v.verdict, v.votes_total), (e.block_index, e.verdict, e.votes_total));
                finals += 1;
            }
            WaeVerdictKind::Expired => {
                assert_eq!(v.block_index, expect.expired[0].block_index);
                expired += 1;
            }
            WaeVerdictKind::None => assert!(expect.finals.is_empty() && expect.expired.is_empty()),
        }
    }
    // W = 4 votes per block: blocks 0..2 expire, 3..8 finalize.
    assert_eq!((expired, finals), (3, 6));
    let mut pushed = 0;
    assert_eq!(unsafe { wae_vote_stream_blocks_pushed(stream, &mut pushed) }, WaeStatus::Ok);
    assert_eq!(pushed, 12);

    let short = [0.0; 3];
    let mut v = WaeBlockVerdict::default();
    let mut kind = WaeVerdictKind::None;
    let st = unsafe { wae_vote_stream_push(stream, det, short.as_ptr(), short.len(), &mut v, &mut kind) };
    assert_eq!(st, WaeStatus::Dimension);
    unsafe {
        wae_vote_stream_free(stream);
        wae_detector_free(det);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut det = ptr::null_mut();
    let missing = CString::new("/nonexistent/det.wae").unwrap();
    assert_eq!(unsafe { wae_detector_load(missing.as_ptr(), &mut det) }, WaeStatus::Io);
    assert!(det.is_null());
    assert!(last_error().contains("/nonexistent/det.wae"));

    assert_eq!(unsafe { wae_detector_load(ptr::null(), &mut det) }, WaeStatus::NullPointer);
    assert!(last_error().contains("path"));

    let bad = [0x66u8, 0x6f, 0xff, 0];
    let st = unsafe { wae_detector_load(bad.as_ptr().cast(), &mut det) };
    assert_eq!(st, WaeStatus::InvalidUtf8);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.wae");
    std::fs::write(&junk, b"not a container\n").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { wae_detector_load(junk.as_ptr(), &mut det) }, WaeStatus::Format);

    let mut stream = ptr::null_mut();
    assert_eq!(unsafe { wae_vote_stream_new(512, 15, 0.5, 1, &mut stream) }, WaeStatus::Config);
    assert!(stream.is_null());

    let mut out = 0u8;
    assert_eq!(unsafe { wae_vote_decide(3, 0, 0.5, &mut out) }, WaeStatus::Contract);
    assert_eq!(unsafe { wae_vote_decide(2, 4, 0.5, &mut out) }, WaeStatus::Ok);
    assert_eq!(out, 1);
    assert_eq!(unsafe { wae_vote_decide(1, 4, 0.5, &mut out) }, WaeStatus::Ok);
    assert_eq!(out, 0);

    unsafe {
        wae_detector_free(ptr::null_mut());
        wae_vote_stream_free(ptr::null_mut());
    }
}

#[test]
fn wavelet_step_round_trips_and_rejects_bad_input() {
    let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).cos()).collect();
    for (code, family) in [
        (WaeWaveletFamily::Haar, WaveletFamily::Haar),
        (WaeWaveletFamily::Db4, WaveletFamily::Daubechies4),
    ] {
        let (mut a, mut d) = (vec![0.0; 8], vec![0.0; 8]);
        let st = unsafe { wae_dwt_level(x.as_ptr(), x.len(), code as u32, a.as_mut_ptr(), d.as_mut_ptr()) };
        assert_eq!(st, WaeStatus::Ok);
        assert_eq!((a.clone(), d.clone()), dwt_level(&x, family).unwrap());
        let mut back = vec![0.0; 16];
        let st = unsafe { wae_idwt_level(a.as_ptr(), d.as_ptr(), 8, code as u32, back.as_mut_ptr()) };
        assert_eq!(st, WaeStatus::Ok);
        let err = back.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-12, "{err}");
    }
    let (mut a, mut d) = (vec![0.0; 8], vec![0.0; 8]);
    let st = unsafe { wae_dwt_level(x.as_ptr(), 15, 0, a.as_mut_ptr(), d.as_mut_ptr()) };
    assert_eq!(st, WaeStatus::Length);
    let st = unsafe { wae_dwt_level(x.as_ptr(), 16, 7, a.as_mut_ptr(), d.as_mut_ptr()) };
    assert_eq!(st, WaeStatus::Config);
    assert!(last_error().contains("family code 7"));
    let st = unsafe { wae_dwt_level(x.as_ptr(), 16, 0, ptr::null_mut(), d.as_mut_ptr()) };
    assert_eq!(st, WaeStatus::NullPointer);
}

#[test]
fn metrics_match_hand_counts() {
    let preds = [1u8, 1, 0, 0, 1, 0];
    let labels = [1u8, 0, 0, 1, 1, 0];
    let mut m = WaeMetrics::default();
    let st = unsafe { wae_compute_metrics(preds.as_ptr(), labels.as_ptr(), preds.len(), &mut m) };
    assert_eq!(st, WaeStatus::Ok);
    assert_eq!((m.tp, m.fp, m.tn, m.fn_), (2, 1, 2, 1));
    assert_eq!(m.precision, 2.0 / 3.0);
    assert_eq!(m.recall, 2.0 / 3.0);
    assert_eq!(m.accuracy, 4.0 / 6.0);
    assert_eq!(m.degenerate_f1, 0);

    let none = [0u8; 4];
    let st = unsafe { wae_compute_metrics(none.as_ptr(), none.as_ptr(), 4, &mut m) };
    assert_eq!(st, WaeStatus::Ok);
    assert_eq!((m.degenerate_precision, m.degenerate_recall, m.degenerate_f1), (1, 1, 1));

    let bad = [2u8];
    let st = unsafe { wae_compute_metrics(bad.as_ptr(), none.as_ptr(), 1, &mut m) };
    assert_eq!(st, WaeStatus::Domain);
}
