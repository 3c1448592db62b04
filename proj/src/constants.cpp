#include "ionramsey/constants.hpp"

namespace ionramsey {

const PhysicalConstants& constants() noexcept {
  // e and hbar are exact in the 2019 SI; the Coulomb factor folds in the
  // CODATA 2018 vacuum permittivity 8.8541878128e-12 F/m.
  static const PhysicalConstants instance{
      /* hbar */ 1.054571817e-34,
      /* elementary_charge */ 1.602176634e-19,
      /* coulomb */ 2.3070775523417355e-28,
      /* atomic_mass_unit */ 1.66053906660e-27,
  };
  return instance;
}

}  // namespace ionramsey
