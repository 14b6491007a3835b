use dia_sgn::scalar::*;

#[test]
fn wrap_angle_range() {
    let pi = std::f64::consts::PI;
    assert_eq!(wrap_angle(0.0_f64), 0.0);
    assert!((wrap_angle(3.0 * pi / 2.0) + pi / 2.0).abs() < 1e-12);
    assert!((wrap_angle(-pi) - pi).abs() < 1e-12);
    assert!((wrap_angle(pi) - pi).abs() < 1e-12);
    assert!((wrap_angle(7.0_f32) - (7.0 - 2.0 * std::f32::consts::PI)).abs() < 1e-5);
}
