use std::ffi::{CStr, CString};
use std::ptr;

use kspace_rl_ffi::*;

fn last_error() -> String {
    let p = ksrl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn dataset_roundtrip_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.bin").to_str().unwrap()).unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(ksrl_dataset_generate(8, 5, 3, &mut ds), KsrlStatus::Ok);
        assert_eq!(ksrl_dataset_len(ds), 5);
        assert_eq!(ksrl_dataset_width(ds), 8);
        assert_eq!(ksrl_dataset_save(ds, path.as_ptr()), KsrlStatus::Ok);

        let mut back = ptr::null_mut();
        assert_eq!(ksrl_dataset_load(path.as_ptr(), &mut back), KsrlStatus::Ok);
        let mut a = vec![0.0; 64];
        let mut b = vec![1.0; 64];
        for i in 0..5 {
            assert_eq!(ksrl_dataset_image(ds, i, a.as_mut_ptr(), 64), KsrlStatus::Ok);
            assert_eq!(ksrl_dataset_image(back, i, b.as_mut_ptr(), 64), KsrlStatus::Ok);
            assert_eq!(a, b);
        }
        assert_eq!(ksrl_dataset_image(ds, 5, a.as_mut_ptr(), 64), KsrlStatus::InvalidInput);
        assert!(last_error().contains("out of range"));
        assert_eq!(ksrl_dataset_image(ds, 0, a.as_mut_ptr(), 10), KsrlStatus::InvalidInput);
        ksrl_dataset_free(ds);
        ksrl_dataset_free(back);
        ksrl_dataset_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(ksrl_dataset_generate(8, 0, 0, &mut ds), KsrlStatus::InvalidConfig);
        assert!(ds.is_null());
        assert_eq!(ksrl_dataset_generate(8, 2, 0, ptr::null_mut()), KsrlStatus::NullPointer);
        assert!(last_error().contains("null"));
        let missing = CString::new("/nonexistent/d.bin").unwrap();
        let s = ksrl_dataset_load(missing.as_ptr(), &mut ds);
        assert!(matches!(s, KsrlStatus::Io | KsrlStatus::Load), "{s:?}");
        assert_eq!(ksrl_dataset_load(ptr::null(), &mut ds), KsrlStatus::NullPointer);
    }
    // A successful call clears the message.
    let mut out = 0.0;
    let x = [0.5; 16];
    assert_eq!(
        unsafe { ksrl_similarity(x.as_ptr(), x.as_ptr(), 4, KsrlMetric::NegMse, &mut out) },
        KsrlStatus::Ok
    );
    assert!(ksrl_last_error().is_null());
}

#[test]
fn zero_recon_evaluates_like_the_zero_filled_baseline() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(ksrl_dataset_generate(16, 10, 1, &mut ds), KsrlStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(ksrl_recon_zero(16, &mut r), KsrlStatus::Ok);
        let mut s = KsrlEvalSummary::default();
        assert_eq!(ksrl_evaluate(ds, ptr::null(), r, 4.0, 0, &mut s), KsrlStatus::Ok);
        assert!(s.n_images > 0);
        assert!(s.mean_ssim > 0.0 && s.mean_ssim < 1.0);
        // Two acquisitions per image at N = 16, x4.
        assert_eq!(s.policy_calls, 2 * s.n_images as u64);
        assert_eq!(s.recon_calls, s.n_images as u64);
        let mut again = KsrlEvalSummary::default();
        assert_eq!(ksrl_evaluate(ds, ptr::null(), r, 4.0, 0, &mut again), KsrlStatus::Ok);
        assert_eq!(s, again);
        // Full sampling reconstructs exactly.
        assert_eq!(ksrl_evaluate(ds, ptr::null(), r, 1.0, 0, &mut s), KsrlStatus::Ok);
        assert!((s.mean_ssim - 1.0).abs() < 1e-12);
        ksrl_recon_free(r);
        ksrl_dataset_free(ds);
    }
}

#[test]
fn checkpoints_load_by_kind() {
    use kspace_rl::models::{save_checkpoint, Checkpoint, ReconArch, ReconParams};
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.ckpt");
    save_checkpoint(&Checkpoint::from(ReconParams::zeros(ReconArch::new(8, 4, 3))), &p).unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(ksrl_recon_load(path.as_ptr(), &mut r), KsrlStatus::Ok);
        ksrl_recon_free(r);
        let mut pol = ptr::null_mut();
        assert_eq!(ksrl_policy_load(path.as_ptr(), &mut pol), KsrlStatus::Load);
        assert!(pol.is_null());
    }
}

#[test]
fn dft_roundtrip_and_parseval() {
    let n = 6;
    let img: Vec<f64> = (0..n * n).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
    let mut re = vec![0.0; n * n];
    let mut im = vec![0.0; n * n];
    unsafe {
        assert_eq!(
            ksrl_dft2(img.as_ptr(), n, re.as_mut_ptr(), im.as_mut_ptr()),
            KsrlStatus::Ok
        );
    }
    let e_img: f64 = img.iter().map(|v| v * v).sum();
    let e_k: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum();
    assert!((e_img - e_k).abs() < 1e-12);
    // DC of the unitary transform is sum / n.
    assert!((re[0] - img.iter().sum::<f64>() / n as f64).abs() < 1e-12);
    unsafe {
        assert_eq!(ksrl_idft2(re.as_mut_ptr(), im.as_mut_ptr(), n), KsrlStatus::Ok);
    }
    for i in 0..n * n {
        assert!((re[i] - img[i]).abs() < 1e-12 && im[i].abs() < 1e-12);
    }
}

#[test]
fn ssim_of_identical_images_is_one() {
    let x: Vec<f64> = (0..64).map(|i| (i % 5) as f64 / 4.0).collect();
    let mut out = 0.0;
    assert_eq!(
        unsafe { ksrl_similarity(x.as_ptr(), x.as_ptr(), 8, KsrlMetric::Ssim, &mut out) },
        KsrlStatus::Ok
    );
    assert!((out - 1.0).abs() < 1e-12);
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(ksrl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_generated_and_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/kspace_rl.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "ksrl_dataset_generate",
        "ksrl_evaluate",
        "ksrl_last_error",
        "KSRL_STATUS_OK",
        "typedef struct KsrlDataset KsrlDataset;",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    // Syntax-check with the system C compiler when one is available.
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!("#include \"{header}\"\nint main(void) {{ return ksrl_version() == 0; }}\n"),
    )
    .unwrap();
    if let Ok(st) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror"])
        .arg(&src)
        .status()
    {
        assert!(st.success(), "header does not compile as C");
    }
}
