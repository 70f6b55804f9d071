use fairlens::imgproc::{augment, gamma_correct, hflip, resize_bilinear, AugmentConfig};
use fairlens::GrayImage;
use proptest::prelude::*;

fn image(min: usize, max: usize) -> impl Strategy<Value = GrayImage> {
    (min..max, min..max).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn default_config_yields_sixteen_variants(img in image(6, 30), size in 4usize..20) {
        let out = augment(&img, &AugmentConfig::default(), size).unwrap();
        prop_assert_eq!(out.len(), 16);
        prop_assert!(out.iter().all(|v| v.width() == size && v.height() == size));
        prop_assert_eq!(&out[0], &resize_bilinear(&img, size, size).unwrap());
        for pair in out.chunks(2) {
            prop_assert_eq!(&hflip(&pair[0]), &pair[1]);
        }
    }

    #[test]
    fn identity_path_is_the_resized_original(img in image(2, 30), size in 1usize..20) {
        let cfg = AugmentConfig { gamma_values: vec![1.0], translate_px: 4, include_translation: false, include_flip: false };
        let out = augment(&img, &cfg, size).unwrap();
        let resized = resize_bilinear(&img, size, size).unwrap();
        prop_assert_eq!(out.len(), 2);
        prop_assert!(out.iter().all(|v| v == &resized));
    }

    #[test]
    fn gamma_keeps_extremes(img in image(1, 20), gamma in 0.05f64..8.0) {
        let out = gamma_correct(&img, gamma).unwrap();
        for (a, b) in img.pixels().iter().zip(out.pixels()) {
            if *a == 0 || *a == 255 {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn hflip_is_an_involution(img in image(1, 30)) {
        prop_assert_eq!(hflip(&hflip(&img)), img);
    }
}
