//! Standard normal density and quantile function.
//!
//! The quantile function uses Wichura's PPND16 rational approximations,
//! accurate to well below 1e-9 in probability space over (0, 1); the test
//! suite asserts this against an independent series expansion of the normal
//! CDF at reference points.

// The PPND16 coefficients are kept at their full published precision.
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.5066282746310002;

/// Standard normal density phi(z).
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Standard normal quantile Phi^{-1}(p) for p in (0, 1).
pub fn norm_ppf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires p in (0, 1), got {p}"
        )));
    }
    Ok(ppnd16(p))
}

// Wichura (1988), algorithm AS 241, PPND16. Three rational approximations:
// a central region in q = p - 1/2 and two tail regions in r = sqrt(-ln p).
fn ppnd16(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608e0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 7] = [
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34e0,
        4.630_337_846_156_545_295_9e0,
        5.769_497_221_460_691_405_5e0,
        3.647_848_324_763_204_605_04e0,
        1.270_458_252_452_368_382_58e0,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 7] = [
        2.053_191_626_637_758_821_87e0,
        1.676_384_830_183_803_849_4e0,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2e0,
        5.463_784_911_164_114_369_9e0,
        1.784_826_539_917_291_335_8e0,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 7] = [
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-6,
        1.421_511_758_316_445_888_7e-9,
        2.044_263_103_389_939_785_64e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = poly7(&A, r);
        let den = poly7_b(&B, r);
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        poly7(&C, r) / poly7_b(&D, r)
    } else {
        let r = r - 5.0;
        poly7(&E, r) / poly7_b(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

fn poly7(coef: &[f64; 8], x: f64) -> f64 {
    (((((((coef[7] * x + coef[6]) * x + coef[5]) * x + coef[4]) * x + coef[3]) * x + coef[2]) * x
        + coef[1])
        * x)
        + coef[0]
}

fn poly7_b(coef: &[f64; 7], x: f64) -> f64 {
    (((((((coef[6] * x + coef[5]) * x + coef[4]) * x + coef[3]) * x + coef[2]) * x + coef[1]) * x
        + coef[0])
        * x)
        + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: Phi(x) = 1/2 + phi(x) * sum_{k>=0} x^{2k+1} / (1*3*...*(2k+1)).
    // The series converges for all x; 200 terms are far more than enough for |x| <= 7.
    fn norm_cdf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for k in 1..200 {
            term *= x * x / (2.0 * k as f64 + 1.0);
            sum += term;
            if term.abs() < 1e-40 {
                break;
            }
        }
        0.5 + norm_pdf(x) * sum
    }

    #[test]
    fn quantile_round_trips_in_probability_space() {
        // 10 reference probabilities spanning both tails and the centre.
        let ps = [
            1e-6,
            1e-3,
            0.025,
            0.2,
            0.37,
            0.5,
            0.8,
            0.975,
            0.999,
            1.0 - 1e-6,
        ];
        for &p in &ps {
            let x = norm_ppf(p).unwrap();
            let back = norm_cdf_series(x);
            assert!(
                (back - p).abs() <= 1e-9,
                "p = {p}: Phi(ppf(p)) = {back}, |diff| = {:e}",
                (back - p).abs()
            );
        }
    }

    #[test]
    fn quantile_known_values() {
        assert_eq!(norm_ppf(0.5).unwrap(), 0.0);
        // Phi^{-1}(0.975) = 1.959963984540054 (classic two-sided 5% point).
        assert!((norm_ppf(0.975).unwrap() - 1.959963984540054).abs() < 1e-12);
        assert!((norm_ppf(0.8413447460685429).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quantile_is_antisymmetric() {
        for &p in &[0.01, 0.1, 0.3, 0.49] {
            let lo = norm_ppf(p).unwrap();
            let hi = norm_ppf(1.0 - p).unwrap();
            assert!((lo + hi).abs() < 1e-12, "p = {p}: {lo} vs {hi}");
        }
    }

    #[test]
    fn quantile_rejects_boundary() {
        assert!(norm_ppf(0.0).is_err());
        assert!(norm_ppf(1.0).is_err());
        assert!(norm_ppf(-0.2).is_err());
        assert!(norm_ppf(f64::NAN).is_err());
    }

    #[test]
    fn pdf_peak_and_symmetry() {
        assert!((norm_pdf(0.0) - 0.3989422804014327).abs() < 1e-15);
        assert_eq!(norm_pdf(1.5), norm_pdf(-1.5));
    }
}
