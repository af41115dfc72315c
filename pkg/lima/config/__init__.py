# Lima Config Module
