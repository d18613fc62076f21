use super::classifier::ClassifierNet;
use super::reconstruction::ReconstructionNet;
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::spectral::{RgbImage, SpectralCube};

/// Classifies `img` and reconstructs it with the chosen specialized model.
/// Returns the chosen class along with the cube.
pub fn specialized_select<T: Real>(
    img: &RgbImage,
    classifier: &ClassifierNet<T>,
    models: &[ReconstructionNet<T>],
) -> Result<(usize, SpectralCube)> {
    if classifier.classes() != models.len() {
        return Err(Error::Configuration(format!(
            "classifier has {} classes but {} models were given",
            classifier.classes(),
            models.len()
        )));
    }
    let class = if models.len() == 1 {
        0
    } else {
        classifier.predict(img)?
    };
    Ok((class, models[class].reconstruct(img, None)?))
}
