#pragma once

#include <vector>

namespace testutil {

// Four AdaBoost.R2 rounds (linear loss, learning rate 0.8) on fixed predictions,
// computed at 40 significant digits. Per round: average loss, beta, estimator
// weight, then the six normalized sample weights.
inline const std::vector<double> kTargets{0.1, 0.4, 0.35, 0.8, 0.9, 0.55};
inline const std::vector<std::vector<double>> kRoundPredictions{
    {0.2, 0.4, 0.3, 0.6, 0.85, 0.5},
    {0.1, 0.5, 0.35, 0.75, 0.7, 0.6},
    {0.15, 0.45, 0.5, 0.8, 0.9, 0.45},
    {0.1, 0.38, 0.36, 0.7, 0.95, 0.55},
};
inline const std::vector<std::vector<double>> kTrace{
    {0.375, 0.6, 0.40866049901279254656, 0.1738967828091276872, 0.14175945912863856893, 0.15700800576796163639,
     0.21331974075834883472, 0.15700800576796163639, 0.15700800576796163639},
    {0.32046967196385853862, 0.47160466390076125768, 0.60129137667294946399, 0.14032546583390552917,
     0.15451326022153042256, 0.1266971199416881402, 0.20006005053896242617, 0.23115552038719344792,
     0.14724858307672003397},
    {0.32314241734464681343, 0.47741567151680504007, 0.59149419104879179835, 0.13809219078566271824,
     0.15205418690490355431, 0.18495006083944025164, 0.16164618032622968286, 0.18677095617665399067,
     0.17648642496710980229},
    {0.30393750187948141422, 0.43665260332249168232, 0.66289388648430123806, 0.10962813043189241976,
     0.13782547656617808818, 0.15689044052504264318, 0.24900581657108701259, 0.20654172929949750536,
     0.14010840660630233093},
};

} // namespace testutil
