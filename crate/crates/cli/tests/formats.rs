use std::fs;

use image::{ImageBuffer, Luma, Rgb, Rgba};
use proptest::prelude::*;
use stereoproxy::io;
use stereoproxy_core::{DisparityMap, Raster};

#[test]
fn black_gray_png() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("black.png");
    ImageBuffer::<Luma<u8>, _>::new(4, 2).save(&p).unwrap();
    let r = io::load_image(&p).unwrap();
    assert_eq!((r.width(), r.height(), r.channels()), (4, 2, 1));
    assert!(r.data().iter().all(|&v| v == 0));
}

#[test]
fn rgb_png_keeps_channel_order() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rgb.png");
    ImageBuffer::from_fn(2, 1, |x, _| Rgb([10 + x as u8, 20, 30])).save(&p).unwrap();
    let r = io::load_image(&p).unwrap();
    assert_eq!(r.channels(), 3);
    assert_eq!(r.data(), &[10, 20, 30, 11, 20, 30]);
}

#[test]
fn rejects_truncated_sixteen_bit_and_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("img.png");
    io::save_image(&Raster::from_fn(32, 32, |x, y| (x ^ y) as u8).unwrap(), &p).unwrap();
    let bytes = fs::read(&p).unwrap();
    let cut = dir.path().join("cut.png");
    fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(io::load_image(&cut), Err(io::IoError::Format { .. })));

    let deep = dir.path().join("deep.png");
    ImageBuffer::<Luma<u16>, _>::new(3, 3).save(&deep).unwrap();
    assert!(io::load_image(&deep).unwrap_err().to_string().contains("16-bit"));
    assert!(io::load_disparity_kitti(&p).unwrap_err().to_string().contains("8-bit"));

    let alpha = dir.path().join("alpha.png");
    ImageBuffer::<Rgba<u8>, _>::new(2, 2).save(&alpha).unwrap();
    assert!(io::load_image(&alpha).is_err());
    assert!(io::load_image(&dir.path().join("missing.png")).is_err());
}

#[test]
fn kitti_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.png");
    ImageBuffer::<Luma<u16>, _>::from_raw(3, 1, vec![256, 0, 25600]).unwrap().save(&p).unwrap();
    let m = io::load_disparity_kitti(&p).unwrap();
    assert_eq!(m.get(0, 0), Some(1.0));
    assert_eq!(m.get(1, 0), None);
    assert_eq!(m.get(2, 0), Some(100.0));

    let src = DisparityMap::from_values(2, 1, vec![37.25, 0.001]).unwrap();
    io::save_disparity_kitti(&src, &p).unwrap();
    let back = io::load_disparity_kitti(&p).unwrap();
    assert_eq!(back.get(0, 0), Some(37.25));
    assert_eq!(back.get(1, 0), None);
}

fn pfm_bytes(header: &str, values: &[f32], little: bool) -> Vec<u8> {
    let mut b = header.as_bytes().to_vec();
    for v in values {
        b.extend_from_slice(&if little { v.to_le_bytes() } else { v.to_be_bytes() });
    }
    b
}

#[test]
fn pfm_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.pfm");
    // rows stored bottom-up: the file's first row is the image's last
    fs::write(&p, pfm_bytes("Pf\n2 2\n-1.0\n", &[3.0, f32::INFINITY, 1.0, 2.5], true)).unwrap();
    let m = io::load_pfm(&p).unwrap();
    assert_eq!(m.get(0, 0), Some(1.0));
    assert_eq!(m.get(1, 0), Some(2.5));
    assert_eq!(m.get(0, 1), Some(3.0));
    assert_eq!(m.get(1, 1), None);

    fs::write(&p, pfm_bytes("Pf\n2 1\n1.0\n", &[0.5, f32::NAN], false)).unwrap();
    let m = io::load_pfm(&p).unwrap();
    assert_eq!(m.get(0, 0), Some(0.5));
    assert_eq!(m.get(1, 0), None);

    fs::write(&p, pfm_bytes("PF\n1 1\n-1.0\n", &[0.0, 0.0, 0.0], true)).unwrap();
    assert!(io::load_pfm(&p).unwrap_err().to_string().contains("color"));
    fs::write(&p, pfm_bytes("P5\n1 1\n-1.0\n", &[0.0], true)).unwrap();
    assert!(io::load_pfm(&p).is_err());
    fs::write(&p, pfm_bytes("Pf\n4 4\n-1.0\n", &[0.0; 3], true)).unwrap();
    assert!(io::load_pfm(&p).is_err());
}

#[test]
fn colorized_output_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let m = DisparityMap::from_fn(16, 4, |x, _| (x % 5 != 0).then_some(x as f32 * 10.0));
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    io::save_colorized(&m, 100.0, &a).unwrap();
    io::save_colorized(&m, 100.0, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let img = io::load_image(&a).unwrap();
    assert_eq!(img.pixel(0, 0), &[0, 0, 0]);
    assert_eq!(img.pixel(11, 0), img.pixel(12, 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn image_round_trip(w in 1usize..20, h in 1usize..20, rgb: bool, seed: u64) {
        let dir = tempfile::tempdir().unwrap();
        let c = if rgb { 3 } else { 1 };
        let data = (0..w * h * c).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
        let r = Raster::new(w, h, c, data).unwrap();
        let p = dir.path().join("x.png");
        io::save_image(&r, &p).unwrap();
        prop_assert_eq!(io::load_image(&p).unwrap(), r);
    }

    #[test]
    fn seed_text_round_trip(points in prop::collection::btree_map((0u32..30, 0u32..50), 0.0f32..300.0, 0..40)) {
        let dir = tempfile::tempdir().unwrap();
        let entries = points.into_iter().map(|((y, x), d)| stereoproxy_core::Seed { x, y, d }).collect();
        let s = stereoproxy_core::SeedSet::new(50, 30, entries).unwrap();
        let p = dir.path().join("s.txt");
        io::save_seeds(&s, &p).unwrap();
        prop_assert_eq!(io::load_seeds(&p).unwrap(), s);
    }
}
