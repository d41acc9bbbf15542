use std::ffi::{CStr, CString};
use std::ptr;

use magvit_toy::formats;
use magvit_toy::model::{NeighborhoodPredictor, Vocabulary};
use magvit_toy_ffi::*;

fn last_error() -> String {
    let p = mg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_entry_points() {
    let mut out = 0.0;
    unsafe {
        let video = MgDims { frames: 16, height: 128, width: 128, channels: 1 };
        let lat = MgLatent { t: 4, h: 16, w: 16 };
        assert_eq!(mg_compression_rate(video, lat, 24, 10, &mut out), MgStatus::Ok);
        assert_eq!(out, 614.4);
        assert!(mg_last_error().is_null());

        assert_eq!(mg_gamma(MG_SCHEDULE_COSINE, 0.0, 0.0, &mut out), MgStatus::Ok);
        assert_eq!(out, 1.0);
        assert_eq!(mg_gamma(MG_SCHEDULE_UNIFORM, 0.0, 0.25, &mut out), MgStatus::Ok);
        assert_eq!(out, 0.75);
        assert_eq!(mg_gamma(MG_SCHEDULE_COSINE, 0.0, 1.5, &mut out), MgStatus::Domain);
        assert!(!last_error().is_empty());
        assert_eq!(mg_gamma(7, 0.0, 0.5, &mut out), MgStatus::Usage);

        let d = MgDims { frames: 16, height: 16, width: 16, channels: 1 };
        assert_eq!(mg_condition_fraction(6, d, &mut out), MgStatus::Ok); // IPC
        assert_eq!(out, 0.75);
        assert_eq!(mg_condition_fraction(10, d, &mut out), MgStatus::Usage);

        assert_eq!(mg_cost_step_ratio(1024, 12, 1024, &mut out), MgStatus::Ok);
        assert!((out - 85.333).abs() < 0.01);

        assert_eq!(mg_gamma(MG_SCHEDULE_COSINE, 0.0, 0.5, ptr::null_mut()), MgStatus::NullPointer);
        assert_eq!(last_error(), "out is null");
    }
}

#[test]
fn codebook_round_trip() {
    let centroids: Vec<f64> = [vec![0.0; 8], vec![1.0; 8]].concat();
    let mut cb = ptr::null_mut();
    unsafe {
        assert_eq!(mg_codebook_new(2, 8, centroids.as_ptr(), &mut cb), MgStatus::Ok);
        assert_eq!(mg_codebook_size(cb), 2);

        let video = MgDims { frames: 4, height: 4, width: 4, channels: 1 };
        let lat = MgLatent { t: 2, h: 2, w: 2 };
        // Frames 0-1 dark, 2-3 bright: one token per latent frame.
        let pixels: Vec<f64> = (0..64).map(|i| if i >= 32 { 1.0 } else { 0.0 }).collect();
        let mut tokens = vec![0u32; 8];
        assert_eq!(mg_encode(cb, video, pixels.as_ptr(), lat, tokens.as_mut_ptr(), 8), MgStatus::Ok);
        assert_eq!(tokens, vec![0, 0, 0, 0, 1, 1, 1, 1]);

        let mut back = vec![0.0; 64];
        assert_eq!(mg_decode(cb, lat, tokens.as_ptr(), video, back.as_mut_ptr(), 64), MgStatus::Ok);
        assert_eq!(back, pixels);

        assert_eq!(mg_decode(cb, lat, tokens.as_ptr(), video, back.as_mut_ptr(), 63), MgStatus::BufferSize);
        let bad = [5u32; 8];
        assert_eq!(mg_decode(cb, lat, bad.as_ptr(), video, back.as_mut_ptr(), 64), MgStatus::Data);
        mg_codebook_free(cb);
        mg_codebook_free(ptr::null_mut());
    }
}

#[test]
fn loaders_and_decode() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Vocabulary::new(4, 1).unwrap();
    let pred = NeighborhoodPredictor::random(vocab, 4, 1, 3, 0.5).unwrap();
    let path = dir.path().join("p.mgpd");
    formats::write_file(&path, &formats::predictor_to_bytes(&pred).unwrap()).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(mg_predictor_load(cpath.as_ptr(), &mut p), MgStatus::Ok);
        assert_eq!(mg_predictor_codebook_size(p), 4);

        let lat = MgLatent { t: 2, h: 2, w: 2 };
        let cond = [1u32, 2, 3, 0, 0, 0, 0, 0];
        let padded = [0u8, 0, 0, 0, 1, 1, 1, 1];
        let mut a = vec![0u32; 8];
        let mut b = vec![0u32; 8];
        for out in [&mut a, &mut b] {
            let s = mg_commit_decode(
                p, 0, MG_NO_LABEL, lat, cond.as_ptr(), padded.as_ptr(), 4, 1.0, MG_SCHEDULE_COSINE, 0.0, 9,
                out.as_mut_ptr(), 8,
            );
            assert_eq!(s, MgStatus::Ok);
        }
        assert_eq!(a, b);
        assert!(a.iter().all(|&t| t < 4));

        // One class: label 0 is the only valid class; -7 is neither a class nor MG_NO_LABEL.
        for (label, want) in [(0, MgStatus::Ok), (1, MgStatus::Config), (-7, MgStatus::Usage)] {
            let s = mg_commit_decode(
                p, 8, label, lat, cond.as_ptr(), padded.as_ptr(), 4, 1.0, MG_SCHEDULE_COSINE, 0.0, 9,
                a.as_mut_ptr(), 8,
            );
            assert_eq!(s, want, "label {label}");
        }
        mg_predictor_free(p);

        let missing = CString::new(dir.path().join("none.mgcb").to_str().unwrap()).unwrap();
        let mut cb = ptr::null_mut();
        assert_eq!(mg_codebook_load(missing.as_ptr(), &mut cb), MgStatus::Io);
        assert!(cb.is_null());
        assert!(last_error().contains("none.mgcb"));
    }
}
