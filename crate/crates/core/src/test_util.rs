macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        let tol: f64 = $tol;
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}
