//! Vectorizable `sin`/`cos` for the activation layers. Three-part π/2
//! reduction with the classic minimax kernels; a few ulp over the range the
//! network sees, falling back to libm for huge arguments.

const FRAC_2_PI: f64 = std::f64::consts::FRAC_2_PI;
const PIO2_1: f64 = 1.570_796_326_734_125_614_17e0;
const PIO2_2: f64 = 6.077_100_506_303_965_976_60e-11;
const PIO2_3: f64 = 2.022_266_248_711_166_455_80e-21;

const S1: f64 = -1.666_666_666_666_663_243_48e-1;
const S2: f64 = 8.333_333_333_322_489_461_24e-3;
const S3: f64 = -1.984_126_982_985_794_931_34e-4;
const S4: f64 = 2.755_731_370_707_006_767_89e-6;
const S5: f64 = -2.505_076_025_340_686_341_95e-8;
const S6: f64 = 1.589_690_995_211_550_102_21e-10;

const C1: f64 = 4.166_666_666_666_660_190_37e-2;
const C2: f64 = -1.388_888_888_887_410_957_49e-3;
const C3: f64 = 2.480_158_728_947_672_941_78e-5;
const C4: f64 = -2.755_731_435_139_066_330_35e-7;
const C5: f64 = 2.087_572_321_298_174_827_90e-9;
const C6: f64 = -1.135_964_755_778_819_482_65e-11;

/// Beyond this the three-part reduction loses accuracy.
const REDUCTION_LIMIT: f64 = 1e6;

/// Adding then subtracting 1.5 * 2^52 rounds to the nearest integer and
/// leaves that integer in the low mantissa bits.
const ROUNDER: f64 = 6_755_399_441_055_744.0;

#[inline(always)]
fn kernel(x: f64) -> (f64, f64) {
    let shifted = x * FRAC_2_PI + ROUNDER;
    let q = shifted.to_bits() & 3;
    let k = shifted - ROUNDER;
    let r = ((x - k * PIO2_1) - k * PIO2_2) - k * PIO2_3;
    let z = r * r;
    let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let swap = q & 1 == 1;
    let (s1, c1) = (if swap { c } else { s }, if swap { s } else { c });
    let sin = f64::from_bits(s1.to_bits() ^ ((q & 2) << 62));
    let cos = f64::from_bits(c1.to_bits() ^ (((q + 1) & 2) << 62));
    (sin, cos)
}

#[inline(always)]
fn activate(z: &mut [f64], slope: &mut [f64], omega: f64) {
    for (a, d) in z.iter_mut().zip(slope.iter_mut()) {
        let (s, c) = kernel(omega * *a);
        *a = s;
        *d = omega * c;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn activate_avx2(z: &mut [f64], slope: &mut [f64], omega: f64) {
    activate(z, slope, omega)
}

/// Replaces each `z` by `sin(omega z)` and writes `omega cos(omega z)` to `slope`.
pub(crate) fn sine_activation(z: &mut [f64], slope: &mut [f64], omega: f64) {
    assert_eq!(z.len(), slope.len());
    if !z.iter().all(|v| (omega * v).abs() < REDUCTION_LIMIT) {
        for (a, d) in z.iter_mut().zip(slope.iter_mut()) {
            let (s, c) = (omega * *a).sin_cos();
            *a = s;
            *d = omega * c;
        }
        return;
    }
    #[cfg(target_arch = "x86_64")]
    if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were detected at runtime.
        unsafe { activate_avx2(z, slope, omega) };
        return;
    }
    activate(z, slope, omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agrees_with_libm() {
        let mut worst: f64 = 0.0;
        let mut x = -2000.0;
        while x < 2000.0 {
            let (s, c) = kernel(x);
            worst = worst.max((s - x.sin()).abs()).max((c - x.cos()).abs());
            x += 0.0137;
        }
        assert!(worst < 4e-16, "max deviation {worst}");
        for &x in &[0.0, -0.0, 1e-300, std::f64::consts::FRAC_PI_2, -3.0 * std::f64::consts::FRAC_PI_2, 1e5 + 0.3] {
            let (s, c) = kernel(x);
            assert!((s - x.sin()).abs() < 1e-15 && (c - x.cos()).abs() < 1e-15, "x = {x}");
        }
    }

    #[test]
    fn huge_arguments_fall_back() {
        let mut z = vec![1e9, 0.5];
        let mut slope = vec![0.0; 2];
        sine_activation(&mut z, &mut slope, 2.0);
        assert_eq!(z[0], 2e9f64.sin());
        assert_eq!(slope[0], 2.0 * 2e9f64.cos());
    }
}
