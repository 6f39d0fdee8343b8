use nalgebra::Vector2;

/// Boundary data along one direction of a bc-group. The prescribed value is
/// `value * program(t)`; without a program the value is constant.
#[derive(Debug, Clone, PartialEq)]
pub enum DirBc {
    Dirichlet { value: f64, program: Option<String> },
    Neumann { value: f64, program: Option<String> },
}

impl DirBc {
    pub fn free() -> Self {
        DirBc::Neumann { value: 0.0, program: None }
    }

    pub fn fixed() -> Self {
        DirBc::Dirichlet { value: 0.0, program: None }
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, DirBc::Dirichlet { .. })
    }

    pub fn value_and_program(&self) -> (f64, Option<&str>) {
        match self {
            DirBc::Dirichlet { value, program } | DirBc::Neumann { value, program } => {
                (*value, program.as_deref())
            }
        }
    }
}

/// Frame of the two directional conditions. `Local` means (normal,
/// tangential) with the tangent along the element direction; it is only
/// accepted for Neumann data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    #[default]
    Global,
    Local,
}

/// Direction along which a contact node may not advance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactDirection {
    /// Averaged outward normal of the adjacent contact elements.
    NodeNormal,
    /// Fixed unit vector, the inward normal of a flat rigid obstacle.
    Fixed(Vector2<f64>),
}

/// Frictionless unilateral contact with a rigid obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactBc {
    pub direction: ContactDirection,
    /// Initial gap is `gap_constant + gap_gradient · x` at node position `x`.
    pub gap_constant: f64,
    pub gap_gradient: Vector2<f64>,
}

impl ContactBc {
    pub fn gap_at(&self, x: &Vector2<f64>) -> f64 {
        self.gap_constant + self.gap_gradient.dot(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupBc {
    Directional { frame: Frame, first: DirBc, second: DirBc },
    Contact(ContactBc),
    Interface,
}

impl GroupBc {
    pub fn xy(x: DirBc, y: DirBc) -> Self {
        GroupBc::Directional { frame: Frame::Global, first: x, second: y }
    }

    pub fn free() -> Self {
        GroupBc::xy(DirBc::free(), DirBc::free())
    }

    pub fn fixed() -> Self {
        GroupBc::xy(DirBc::fixed(), DirBc::fixed())
    }
}
