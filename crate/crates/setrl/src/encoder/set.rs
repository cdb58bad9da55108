//! Class-tagged object collections.

use super::EncoderError;

/// The objects of one class: exchangeable feature vectors of equal length.
/// An object's class membership comes from which block it sits in, never
/// from its position inside the block.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassObjects {
    pub name: String,
    pub dim: usize,
    pub objects: Vec<Vec<f64>>,
}

impl ClassObjects {
    pub fn new(name: impl Into<String>, dim: usize, objects: Vec<Vec<f64>>) -> ClassObjects {
        ClassObjects {
            name: name.into(),
            dim,
            objects,
        }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        for (index, o) in self.objects.iter().enumerate() {
            if o.len() != self.dim {
                return Err(EncoderError::DimMismatch {
                    index,
                    expected: self.dim,
                    got: o.len(),
                });
            }
        }
        Ok(())
    }
}

/// An observation as an unordered, class-partitioned object collection plus
/// an ego context vector. The ego part is agent-centric state that is not
/// exchangeable and therefore bypasses set pooling.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ObjectSet {
    pub classes: Vec<ClassObjects>,
    pub ego: Vec<f64>,
}

impl ObjectSet {
    pub fn new(classes: Vec<ClassObjects>, ego: Vec<f64>) -> ObjectSet {
        ObjectSet { classes, ego }
    }

    pub fn class(&self, name: &str) -> Option<&ClassObjects> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn total_objects(&self) -> usize {
        self.classes.iter().map(|c| c.len()).sum()
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        for c in &self.classes {
            c.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_flags_wrong_dims() {
        let c = ClassObjects::new("food", 2, vec![vec![1.0, 2.0], vec![3.0]]);
        let err = c.validate().unwrap_err();
        assert!(matches!(
            err,
            EncoderError::DimMismatch {
                index: 1,
                expected: 2,
                got: 1
            }
        ));
    }

    #[test]
    fn lookup_by_class_name() {
        let set = ObjectSet::new(
            vec![
                ClassObjects::new("food", 2, vec![vec![0.0, 0.0]]),
                ClassObjects::new("poison", 2, vec![]),
            ],
            vec![0.5, 0.5],
        );
        assert_eq!(set.class("food").unwrap().len(), 1);
        assert!(set.class("poison").unwrap().is_empty());
        assert!(set.class("attacker").is_none());
        assert_eq!(set.total_objects(), 1);
    }
}
