use mareg_core::io::{load_displacement, load_volume, raw_data_path, save_displacement, save_volume, VolumeFormat, NIFTI_HEADER_BYTES};
use mareg_core::{DisplacementField, Shape3, Spacing, Volume3D};
use nifti::{NiftiObject, RandomAccessNiftiVolume, ReaderOptions};

fn pattern(shape: Shape3) -> Volume3D {
    Volume3D::from_fn(shape, |x, y, z| ((x * 31 + y * 17 + z * 7) % 101) as f32 / 7.0 - 3.0)
}

#[test]
fn raw_zeros_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zeros.json");
    save_volume(&Volume3D::zeros(Shape3::cube(8)), &path, VolumeFormat::RawJson).unwrap();
    let v = load_volume(&path, VolumeFormat::RawJson).unwrap();
    assert_eq!(v.shape(), Shape3::cube(8));
    assert!(v.data().iter().all(|&x| x == 0.0));
}

#[test]
fn every_format_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let v = pattern(Shape3::new(9, 6, 5)).with_spacing(Spacing([0.7, 1.1, 2.5])).unwrap();
    for name in ["a.json", "a.nii", "a.nii.gz"] {
        let path = dir.path().join(name);
        let fmt = VolumeFormat::from_path(&path).unwrap();
        save_volume(&v, &path, fmt).unwrap();
        let back = load_volume(&path, fmt).unwrap();
        assert_eq!(back.shape(), v.shape(), "{name}");
        assert_eq!(back.data(), v.data(), "{name}");
        let (a, b) = (back.spacing().0, v.spacing().0);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-6, "{name}");
        }
    }
}

#[test]
fn file_sizes_match_layout() {
    let dir = tempfile::tempdir().unwrap();
    let v = Volume3D::filled(Shape3::new(4, 5, 6), 1.0);
    let raw = dir.path().join("c.json");
    save_volume(&v, &raw, VolumeFormat::RawJson).unwrap();
    assert_eq!(std::fs::metadata(raw_data_path(&raw)).unwrap().len(), 4 * 5 * 6 * 4);
    let nii = dir.path().join("c.nii");
    save_volume(&v, &nii, VolumeFormat::Nifti).unwrap();
    assert_eq!(std::fs::metadata(&nii).unwrap().len() as usize, NIFTI_HEADER_BYTES + 4 * 5 * 6 * 4);
}

#[test]
fn anisotropic_spacing_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mr.nii");
    let v = pattern(Shape3::new(8, 8, 4)).with_spacing(Spacing([0.4297, 0.4297, 6.0])).unwrap();
    save_volume(&v, &path, VolumeFormat::Nifti).unwrap();
    let back = load_volume(&path, VolumeFormat::Nifti).unwrap();
    let s = back.spacing().0;
    assert!((s[0] - 0.4297).abs() < 1e-6 && (s[1] - 0.4297).abs() < 1e-6 && (s[2] - 6.0).abs() < 1e-6);
}

#[test]
fn independent_reader_agrees_on_a_large_volume() {
    let dir = tempfile::tempdir().unwrap();
    let shape = Shape3::new(256, 256, 128);
    let v = pattern(shape).with_spacing(Spacing([0.8, 0.8, 1.5])).unwrap();
    let path = dir.path().join("big.nii.gz");
    save_volume(&v, &path, VolumeFormat::Nifti).unwrap();

    let obj = ReaderOptions::new().read_file(&path).unwrap();
    let h = obj.header();
    assert_eq!(&h.dim[..4], &[3, 256, 256, 128]);
    assert!((h.pixdim[3] - 1.5).abs() < 1e-6);
    let vol = obj.volume();
    for &(x, y, z) in &[(0, 0, 0), (255, 3, 17), (100, 200, 127), (7, 255, 64)] {
        let theirs = vol.get_f32(&[x as u16, y as u16, z as u16]).unwrap();
        assert_eq!(theirs, v.get(x, y, z));
    }
}

#[test]
fn independent_writer_is_readable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("theirs.nii");
    let data: Vec<f32> = (0..6 * 5 * 4).map(|i| i as f32 * 0.5).collect();
    let arr = ndarray_from(&data, [6, 5, 4]);
    nifti::writer::WriterOptions::new(&path).write_nifti(&arr).unwrap();
    let v = load_volume(&path, VolumeFormat::Nifti).unwrap();
    assert_eq!(v.shape(), Shape3::new(6, 5, 4));
    assert_eq!(v.data(), &data[..]);
}

fn ndarray_from(data: &[f32], dims: [usize; 3]) -> ndarray::Array3<f32> {
    // x fastest on disk is Fortran order in ndarray terms
    ndarray::Array3::from_shape_vec(ndarray::ShapeBuilder::f(dims), data.to_vec()).unwrap()
}

#[test]
fn displacement_components_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = Shape3::new(5, 4, 3);
    let u = DisplacementField::from_fn(s, |x, y, z| [x as f32, -(y as f32), 0.25 * z as f32]);
    let paths = save_displacement(&u, &Volume3D::zeros(s), dir.path(), "ddf", VolumeFormat::RawJson).unwrap();
    assert_eq!(load_displacement(&paths, VolumeFormat::RawJson).unwrap(), u);
    assert!(load_displacement(&paths[..2], VolumeFormat::RawJson).is_err());
}

#[test]
fn malformed_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.json");
    save_volume(&pattern(Shape3::cube(4)), &path, VolumeFormat::RawJson).unwrap();
    std::fs::write(raw_data_path(&path), [0u8; 10]).unwrap();
    assert!(load_volume(&path, VolumeFormat::RawJson).is_err());
    std::fs::write(&path, r#"{"shape":[4,4,4],"spacing":[1,1,1],"dtype":"f64"}"#).unwrap();
    assert!(load_volume(&path, VolumeFormat::RawJson).is_err());
    let nii = dir.path().join("bad.nii");
    std::fs::write(&nii, vec![0u8; 400]).unwrap();
    assert!(load_volume(&nii, VolumeFormat::Nifti).is_err());
    assert!(load_volume(dir.path().join("missing.nii"), VolumeFormat::Nifti).is_err());
    assert!(VolumeFormat::from_path(std::path::Path::new("x.png")).is_err());
}
