//! Curated word lists for template-mode generation.

pub struct Landmark {
    pub city: &'static str,
    pub site: &'static str,
    pub kind: &'static str,
}

const fn lm(city: &'static str, site: &'static str, kind: &'static str) -> Landmark {
    Landmark { city, site, kind }
}

pub struct CountryLexicon {
    pub country: &'static str,
    pub landmarks: &'static [Landmark],
    pub cities: &'static [&'static str],
}

pub const COUNTRIES: &[CountryLexicon] = &[
    CountryLexicon {
        country: "India",
        landmarks: &[
            lm("Agra", "Taj Mahal", "marble mausoleum"),
            lm("Delhi", "Red Fort", "fortress"),
            lm("Mumbai", "Gateway of India", "arch monument"),
            lm("Amritsar", "Golden Temple", "gurdwara"),
            lm("Jaipur", "Hawa Mahal", "palace"),
        ],
        cities: &[
            "Mumbai",
            "Delhi",
            "Bengaluru",
            "Kolkata",
            "Chennai",
            "Hyderabad",
            "Jaipur",
            "Pune",
            "Ahmedabad",
            "Lucknow",
            "Kochi",
            "Varanasi",
            "Amritsar",
            "Mysuru",
            "Bhopal",
            "Chandigarh",
        ],
    },
    CountryLexicon {
        country: "France",
        landmarks: &[
            lm("Paris", "Louvre Museum", "art museum"),
            lm("Avignon", "Rocher des Doms", "hilltop garden"),
            lm("Paris", "Eiffel Tower", "wrought-iron tower"),
            lm("Marseille", "Notre-Dame de la Garde", "basilica"),
            lm("Lyon", "Parc de la Tete d'Or", "urban park"),
        ],
        cities: &[
            "Paris",
            "Lyon",
            "Marseille",
            "Toulouse",
            "Nice",
            "Nantes",
            "Strasbourg",
            "Bordeaux",
            "Lille",
            "Rennes",
            "Montpellier",
            "Avignon",
            "Dijon",
            "Grenoble",
            "Reims",
            "Rouen",
        ],
    },
    CountryLexicon {
        country: "United States",
        landmarks: &[
            lm("New York", "Statue of Liberty", "monument"),
            lm("San Francisco", "Golden Gate Bridge", "suspension bridge"),
            lm("Washington", "Lincoln Memorial", "memorial"),
            lm("Chicago", "Art Institute", "art museum"),
            lm("Seattle", "Space Needle", "observation tower"),
        ],
        cities: &[
            "Boston",
            "Chicago",
            "Seattle",
            "Denver",
            "Austin",
            "Atlanta",
            "Portland",
            "Phoenix",
            "Nashville",
            "Philadelphia",
            "San Diego",
            "Minneapolis",
            "New Orleans",
            "Pittsburgh",
            "Baltimore",
            "Salt Lake City",
        ],
    },
    CountryLexicon {
        country: "Canada",
        landmarks: &[
            lm("Toronto", "CN Tower", "observation tower"),
            lm("Montreal", "Notre-Dame Basilica", "basilica"),
            lm("Quebec City", "Chateau Frontenac", "grand hotel"),
            lm("Ottawa", "Parliament Hill", "government complex"),
            lm("Vancouver", "Stanley Park", "urban park"),
        ],
        cities: &[
            "Toronto",
            "Montreal",
            "Vancouver",
            "Calgary",
            "Ottawa",
            "Edmonton",
            "Winnipeg",
            "Quebec City",
            "Halifax",
            "Victoria",
            "Regina",
            "Saskatoon",
            "Hamilton",
            "Kingston",
            "St. John's",
            "Fredericton",
        ],
    },
    CountryLexicon {
        country: "Russia",
        landmarks: &[
            lm("Moscow", "Red Square", "public square"),
            lm("Saint Petersburg", "Hermitage Museum", "art museum"),
            lm("Moscow", "Bolshoi Theatre", "theatre"),
            lm("Kazan", "Kazan Kremlin", "citadel"),
            lm("Saint Petersburg", "Peterhof Palace", "palace"),
        ],
        cities: &[
            "Moscow",
            "Saint Petersburg",
            "Kazan",
            "Novosibirsk",
            "Yekaterinburg",
            "Samara",
            "Sochi",
            "Vladivostok",
            "Irkutsk",
            "Omsk",
            "Perm",
            "Volgograd",
            "Rostov-on-Don",
            "Tula",
            "Yaroslavl",
            "Murmansk",
        ],
    },
];

/// Generic sites crossed with city names: `(site, kind)`.
pub const GENERIC_SITES: &[(&str, &str)] = &[
    ("Central Station", "railway station"),
    ("City Museum", "history museum"),
    ("Botanical Garden", "botanical garden"),
    ("Old Town Hall", "civic building"),
    ("Cathedral", "cathedral"),
    ("Public Library", "library"),
    ("Riverside Park", "park"),
    ("Art Gallery", "art gallery"),
    ("Opera House", "opera house"),
    ("University Campus", "university campus"),
    ("Football Stadium", "stadium"),
    ("Market Hall", "covered market"),
    ("Clock Tower", "clock tower"),
    ("Science Centre", "science museum"),
    ("Zoological Park", "zoo"),
    ("Memorial Square", "public square"),
];

pub const FAMOUS_ADJECTIVE: &str = "world-famous";

pub const ADJECTIVES: &[&str] = &[
    "well-known",
    "historic",
    "popular",
    "renowned",
    "modern",
    "much-visited",
    "celebrated",
    "beloved",
];

pub const FILLER_ORIGINS: &[&str] = &[
    "It dates back to the 17th century",
    "It was established in the 19th century",
    "It opened in the early 20th century",
    "Its origins trace back to the 18th century",
    "It was rebuilt after the Second World War",
    "It was extensively restored in the 1990s",
];

pub const FILLER_FEATURES: &[&str] = &[
    "and attracts large crowds of visitors every year.",
    "and is known for its striking architecture.",
    "and hosts cultural events throughout the year.",
    "and is a favourite spot for local residents.",
    "and offers sweeping views of the surrounding area.",
    "and appears on many postcards of the region.",
];

/// City names for a country outside the curated list.
pub fn synthetic_cities(country: &str) -> Vec<String> {
    ["North", "South", "East", "West", "Upper", "Lower", "New", "Old"]
        .iter()
        .map(|p| format!("{p} {country}"))
        .collect()
}

pub fn lookup(country: &str) -> Option<&'static CountryLexicon> {
    COUNTRIES.iter().find(|c| c.country == country)
}

// Composition vocabulary.

pub const FIRST_NAMES: &[&str] = &[
    "Randal",
    "Edith",
    "Hugo",
    "Margaret",
    "Oswald",
    "Beatrice",
    "Cedric",
    "Florence",
    "Ambrose",
    "Harriet",
    "Lionel",
    "Agnes",
    "Percival",
    "Winifred",
    "Reginald",
    "Clara",
    "Ignatius",
    "Matilda",
    "Bartholomew",
    "Louisa",
    "Theodore",
    "Imogen",
    "Cornelius",
    "Rosalind",
    "Mortimer",
    "Adelaide",
    "Horace",
    "Eleanor",
    "Silas",
    "Philippa",
];

pub const LAST_NAMES: &[&str] = &[
    "Plunkett",
    "Ashdown",
    "Beaumont",
    "Carrow",
    "Delacourt",
    "Everleigh",
    "Fairbanks",
    "Grisham",
    "Hollister",
    "Ingram",
    "Jessop",
    "Kendrick",
    "Lockwood",
    "Merriweather",
    "Northcote",
    "Oakhurst",
    "Pendleton",
    "Quarrington",
    "Radcliffe",
    "Stanhope",
    "Thornbury",
    "Underhill",
    "Vane",
    "Whitmore",
    "Yardley",
    "Ashcombe",
    "Blackwood",
    "Chesterfield",
    "Dunmore",
    "Ellsworth",
];

pub const TOWNS: &[&str] = &[
    "Dunsany",
    "Kilbride",
    "Ashford",
    "Bramley",
    "Coldharbour",
    "Dunmere",
    "Elmstead",
    "Fernhill",
    "Glenrothes",
    "Hartwell",
    "Ivybridge",
    "Kelso",
    "Langholm",
    "Marlow",
    "Newhaven",
    "Oakham",
    "Penrith",
    "Redhill",
    "Stowe",
    "Thirsk",
    "Wickham",
    "Yarmouth",
];

pub const NATIONS: &[&str] = &["Ireland", "England", "Scotland", "Wales", "Brittany"];

pub const FILM_ADJECTIVES: &[&str] = &[
    "Silent",
    "Crimson",
    "Hidden",
    "Last",
    "Golden",
    "Broken",
    "Distant",
    "Forgotten",
    "Burning",
    "Endless",
    "Velvet",
    "Northern",
];

pub const FILM_NOUNS: &[&str] = &[
    "Harbour", "Promise", "Garden", "Frontier", "Letter", "Kingdom", "Voyage", "Orchard", "Mirror", "Lantern",
    "Meadow", "Crossing",
];

pub const CAUSES_OF_DEATH: &[&str] = &[
    "tuberculosis",
    "pneumonia",
    "heart failure",
    "stroke",
    "influenza",
    "cholera",
    "typhoid fever",
    "drowning",
    "a riding accident",
    "old age",
];

pub const UNIVERSITIES: &[&str] = &[
    "Trinity College Dublin",
    "University of Oxford",
    "University of Cambridge",
    "University of Edinburgh",
    "King's College London",
    "University of Glasgow",
    "Durham University",
    "University of St Andrews",
];

pub const AWARDS: &[&str] = &[
    "Order of the Garter",
    "Royal Gold Medal",
    "Victoria Cross",
    "Order of Merit",
    "Copley Medal",
    "Albert Medal",
];
