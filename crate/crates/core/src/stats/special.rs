//! Special functions backing the significance tests: log-gamma, regularized
//! incomplete gamma (series + continued fraction), chi-square survival,
//! normal CDF, and the studentized range distribution at infinite degrees of
//! freedom.

/// Lanczos approximation (g = 7, 9 terms); relative error below 1e-13 on the
/// positive axis.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(s, x), via the series expansion for
/// x < s + 1 and the Lentz continued fraction otherwise. Accurate to roughly
/// 1e-14 relative.
pub fn reg_gamma_p(s: f64, x: f64) -> f64 {
    assert!(s > 0.0 && x >= 0.0, "reg_gamma_p domain");
    if x == 0.0 {
        return 0.0;
    }
    if x < s + 1.0 {
        gamma_p_series(s, x)
    } else {
        1.0 - gamma_q_continued_fraction(s, x)
    }
}

/// Regularized upper incomplete gamma Q(s, x) = 1 - P(s, x).
pub fn reg_gamma_q(s: f64, x: f64) -> f64 {
    assert!(s > 0.0 && x >= 0.0, "reg_gamma_q domain");
    if x == 0.0 {
        return 1.0;
    }
    if x < s + 1.0 {
        1.0 - gamma_p_series(s, x)
    } else {
        gamma_q_continued_fraction(s, x)
    }
}

fn gamma_p_series(s: f64, x: f64) -> f64 {
    let mut ap = s;
    let mut sum = 1.0 / s;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + s * x.ln() - ln_gamma(s)).exp()
}

fn gamma_q_continued_fraction(s: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x + s * x.ln() - ln_gamma(s)).exp()
}

/// Chi-square survival function with `k` degrees of freedom.
pub fn chi_square_sf(x: f64, k: usize) -> f64 {
    assert!(k > 0, "chi_square_sf needs positive degrees of freedom");
    if x <= 0.0 {
        return 1.0;
    }
    reg_gamma_q(k as f64 / 2.0, x / 2.0)
}

/// erfc through the incomplete gamma: erfc(z) = Q(1/2, z²) for z >= 0.
fn erfc(z: f64) -> f64 {
    if z >= 0.0 {
        reg_gamma_q(0.5, z * z)
    } else {
        2.0 - reg_gamma_q(0.5, z * z)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Survival function of the studentized range distribution with `k` groups
/// and infinite degrees of freedom:
/// `1 - k ∫ φ(z) [Φ(z) − Φ(z−q)]^(k−1) dz`, integrated by Simpson's rule.
pub fn studentized_range_sf(q: f64, k: usize) -> f64 {
    assert!(k >= 2, "studentized range needs at least two groups");
    if q <= 0.0 {
        return 1.0;
    }
    // The integrand decays like the normal density; [-8, q+8] captures it to
    // well below the quadrature error.
    let lo = -8.0;
    let hi = q + 8.0;
    let steps_f = ((hi - lo) / 0.005).ceil();
    let mut steps = steps_f as usize;
    if steps % 2 == 1 {
        steps += 1;
    }
    let h = (hi - lo) / steps as f64;
    let f = |z: f64| normal_pdf(z) * (normal_cdf(z) - normal_cdf(z - q)).powi(k as i32 - 1);
    let mut sum = f(lo) + f(hi);
    for i in 1..steps {
        let z = lo + h * i as f64;
        sum += if i % 2 == 1 { 4.0 * f(z) } else { 2.0 * f(z) };
    }
    let cdf = (k as f64) * sum * h / 3.0;
    (1.0 - cdf).clamp(0.0, 1.0)
}
